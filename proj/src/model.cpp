#include "bbnn/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace bbnn {
namespace {

const char kMagic[4] = {'B', 'B', 'N', 'N'};
constexpr std::uint16_t kVersion = 1;

std::string dim_str(std::int64_t h, std::int64_t w, std::int64_t c) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

char block_letter(std::int64_t l) {  // 1 -> 'a'
  return l <= 26 ? static_cast<char>('a' + l - 1) : '?';
}

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) {
    throw DataError(std::string("checkpoint: truncated reading ") + what);
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(std::string("checkpoint: truncated reading ") + what);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::string format_thousands(std::int64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  const std::size_t first = digits[0] == '-' ? 1 : 0;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > first && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

InceptionBlock::InceptionBlock(std::int64_t c_in)
    : p1x1(1, 1, c_in, kBranch),
      reduce3(1, 1, c_in, kBranch),
      conv3(3, 3, kBranch, kBranch),
      reduce5(1, 1, c_in, kBranch),
      conv5(5, 5, kBranch, kBranch),
      pool_proj(1, 1, c_in, kBranch) {}

Tensor InceptionBlock::forward_train(const Tensor& x, Cache& cache) {
  cache.input = x;
  Tensor b1 = p1x1.forward_train(x, cache.p1x1);
  Tensor b3 = conv3.forward_train(reduce3.forward_train(x, cache.reduce3), cache.conv3);
  Tensor b5 = conv5.forward_train(reduce5.forward_train(x, cache.reduce5), cache.conv5);
  Tensor pooled = maxpool2d(x, 3, 3, 1, 1, PoolPad::same);
  Tensor bp = pool_proj.forward_train(pooled, cache.pool_proj);
  return concat_channels({&b1, &b3, &b5, &bp});
}

Tensor InceptionBlock::forward_infer(const Tensor& x) const {
  Tensor b1 = p1x1.forward_infer(x);
  Tensor b3 = conv3.forward_infer(reduce3.forward_infer(x));
  Tensor b5 = conv5.forward_infer(reduce5.forward_infer(x));
  Tensor bp = pool_proj.forward_infer(maxpool2d(x, 3, 3, 1, 1, PoolPad::same));
  return concat_channels({&b1, &b3, &b5, &bp});
}

Tensor InceptionBlock::backward(const Cache& cache, const Tensor& grad_out) {
  std::vector<Tensor> g = split_channels(grad_out, {kBranch, kBranch, kBranch, kBranch});
  Tensor gx = p1x1.backward(cache.p1x1, g[0]);
  add_inplace(gx, reduce3.backward(cache.reduce3, conv3.backward(cache.conv3, g[1])));
  add_inplace(gx, reduce5.backward(cache.reduce5, conv5.backward(cache.conv5, g[2])));
  Tensor g_pool = pool_proj.backward(cache.pool_proj, g[3]);
  add_inplace(gx, maxpool2d_backward(cache.input, 3, 3, 1, 1, PoolPad::same, g_pool));
  return gx;
}

void InceptionBlock::init_params(Rng& rng) {
  p1x1.init_params(rng);
  reduce3.init_params(rng);
  conv3.init_params(rng);
  reduce5.init_params(rng);
  conv5.init_params(rng);
  pool_proj.init_params(rng);
}

std::int64_t InceptionBlock::top_param_count() const {
  return p1x1.conv_param_count() + reduce3.conv_param_count() +
         reduce5.conv_param_count();
}

std::int64_t InceptionBlock::bottom_param_count() const {
  return conv3.conv_param_count() + conv5.conv_param_count() +
         pool_proj.conv_param_count();
}

void InceptionBlock::register_tensors(const std::string& prefix,
                                      TensorRegistry& reg) {
  p1x1.register_tensors(prefix + ".p1x1", reg);
  reduce3.register_tensors(prefix + ".reduce3", reg);
  conv3.register_tensors(prefix + ".conv3", reg);
  reduce5.register_tensors(prefix + ".reduce5", reg);
  conv5.register_tensors(prefix + ".conv5", reg);
  pool_proj.register_tensors(prefix + ".pool_proj", reg);
}

BbnnModel::BbnnModel(const ModelConfig& cfg)
    : cfg_(cfg),
      sl_unit_(3, 3, 1, InceptionBlock::kBranch),
      tl_unit_(1, 1,
               InceptionBlock::kBranch + InceptionBlock::kGrowth * cfg.blocks,
               InceptionBlock::kBranch),
      head_(InceptionBlock::kBranch, cfg.n_classes) {
  if (cfg.n_classes < 2) throw ShapeError("model needs at least 2 classes");
  if (cfg.blocks < 1) throw ShapeError("model needs at least 1 block");
  // walk the pooling chain so undersized inputs fail here, not mid-forward
  const Shape4 in{1, cfg.input_h, cfg.input_w, 1};
  const Shape4 sl_pooled =
      pool_output_shape({1, in.h, in.w, InceptionBlock::kBranch}, 4, 1, 4, 1,
                        PoolPad::valid);
  pool_output_shape({1, sl_pooled.h, sl_pooled.w, InceptionBlock::kBranch}, 2,
                    2, 2, 2, PoolPad::valid);
  blocks_.reserve(static_cast<std::size_t>(cfg.blocks));
  for (std::int64_t l = 1; l <= cfg.blocks; ++l) {
    blocks_.emplace_back(InceptionBlock::kBranch +
                         InceptionBlock::kGrowth * (l - 1));
  }
}

void BbnnModel::init_params(Rng& rng) {
  sl_unit_.init_params(rng);
  for (auto& b : blocks_) b.init_params(rng);
  tl_unit_.init_params(rng);
  head_.init_params(rng);
}

void BbnnModel::check_input(const Tensor& x) const {
  if (x.n() < 1 || x.h() != cfg_.input_h || x.w() != cfg_.input_w || x.c() != 1) {
    throw ShapeError("model input: expected (N," + std::to_string(cfg_.input_h) +
                     "," + std::to_string(cfg_.input_w) + ",1), got " +
                     x.shape().str());
  }
}

Tensor BbnnModel::tl_pool(const Tensor& x) const {
  return cfg_.tl_max_pool ? maxpool2d(x, 2, 2, 2, 2) : avgpool2d(x, 2, 2, 2, 2);
}

Tensor BbnnModel::forward_train(const Tensor& x, Cache& cache) {
  check_input(x);
  cache.sl_conv_out = sl_unit_.forward_train(x, cache.sl);
  cache.feats.clear();
  cache.feats.push_back(maxpool2d(cache.sl_conv_out, 4, 1, 4, 1));
  cache.block_caches.assign(static_cast<std::size_t>(cfg_.blocks), {});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    Tensor in = cache.feats.size() == 1 ? cache.feats[0]
                                        : concat_channels(cache.feats);
    cache.feats.push_back(blocks_[l].forward_train(in, cache.block_caches[l]));
  }
  cache.tl_in = concat_channels(cache.feats);
  cache.tl_conv_out = tl_unit_.forward_train(cache.tl_in, cache.tl);
  cache.tl_pool_out = tl_pool(cache.tl_conv_out);
  cache.gap_out = global_avg_pool(cache.tl_pool_out);
  cache.logits = head_.forward(cache.gap_out, &cache.dl);
  return softmax_rows(cache.logits);
}

Tensor BbnnModel::forward_infer(const Tensor& x,
                                std::vector<Shape4>* trace) const {
  check_input(x);
  auto note = [&](const Tensor& t) {
    if (trace) trace->push_back(t.shape());
  };
  Tensor conv_out = sl_unit_.forward_infer(x);
  note(conv_out);
  std::vector<Tensor> feats;
  feats.push_back(maxpool2d(conv_out, 4, 1, 4, 1));
  note(feats[0]);
  Tensor concat = feats[0];
  for (const auto& block : blocks_) {
    feats.push_back(block.forward_infer(concat));
    concat = concat_channels(feats);
    note(concat);
  }
  Tensor tl_conv_out = tl_unit_.forward_infer(concat);
  note(tl_conv_out);
  Tensor pooled = tl_pool(tl_conv_out);
  note(pooled);
  Tensor gap = global_avg_pool(pooled);
  note(gap);
  Tensor logits = head_.forward(gap);
  note(logits);
  return softmax_rows(logits);
}

void BbnnModel::backward(const Cache& cache, const Tensor& grad_logits) {
  Tensor g_gap = head_.backward(cache.dl, grad_logits);
  Tensor g_tl_pool =
      global_avg_pool_backward(cache.tl_pool_out.shape(), g_gap);
  Tensor g_tl_conv =
      cfg_.tl_max_pool
          ? maxpool2d_backward(cache.tl_conv_out, 2, 2, 2, 2, PoolPad::valid,
                               g_tl_pool)
          : avgpool2d_backward(cache.tl_conv_out.shape(), 2, 2, 2, 2, g_tl_pool);
  Tensor g_tl_in = tl_unit_.backward(cache.tl, g_tl_conv);

  std::vector<std::int64_t> widths;
  widths.push_back(InceptionBlock::kBranch);
  for (std::int64_t l = 0; l < cfg_.blocks; ++l) {
    widths.push_back(InceptionBlock::kGrowth);
  }
  std::vector<Tensor> feat_grads = split_channels(g_tl_in, widths);

  for (std::int64_t l = cfg_.blocks; l >= 1; --l) {
    Tensor g_in = blocks_[static_cast<std::size_t>(l - 1)].backward(
        cache.block_caches[static_cast<std::size_t>(l - 1)],
        feat_grads[static_cast<std::size_t>(l)]);
    if (l == 1) {
      add_inplace(feat_grads[0], g_in);
    } else {
      std::vector<std::int64_t> up(widths.begin(), widths.begin() + l);
      std::vector<Tensor> parts = split_channels(g_in, up);
      for (std::size_t j = 0; j < parts.size(); ++j) {
        add_inplace(feat_grads[j], parts[j]);
      }
    }
  }

  Tensor g_sl_conv = maxpool2d_backward(cache.sl_conv_out, 4, 1, 4, 1,
                                        PoolPad::valid, feat_grads[0]);
  sl_unit_.backward(cache.sl, g_sl_conv);  // input gradient discarded
}

void BbnnModel::zero_grads() {
  TensorRegistry reg = collect_tensors();
  for (auto& p : reg.params) p.grad->fill(0.0f);
}

TensorRegistry BbnnModel::collect_tensors() {
  TensorRegistry reg;
  sl_unit_.register_tensors("sl", reg);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].register_tensors("bm" + std::to_string(l + 1), reg);
  }
  tl_unit_.register_tensors("tl", reg);
  head_.register_tensors("dl.fc", reg);
  return reg;
}

std::vector<const Tensor*> BbnnModel::dense_inputs(const Cache& cache,
                                                   std::int64_t l) const {
  if (l < 1 || l > cfg_.blocks) {
    throw ShapeError("dense_inputs: block index " + std::to_string(l) +
                     " outside [1," + std::to_string(cfg_.blocks) + "]");
  }
  std::vector<const Tensor*> out;
  for (std::int64_t j = 0; j < l; ++j) {
    out.push_back(&cache.feats[static_cast<std::size_t>(j)]);
  }
  return out;
}

std::vector<BbnnModel::TableRow> BbnnModel::param_table() const {
  const std::int64_t b = InceptionBlock::kBranch;
  const Shape4 sl_pooled = pool_output_shape(
      {1, cfg_.input_h, cfg_.input_w, b}, 4, 1, 4, 1, PoolPad::valid);
  const Shape4 tl_pooled = pool_output_shape(
      {1, sl_pooled.h, sl_pooled.w, b}, 2, 2, 2, 2, PoolPad::valid);

  std::vector<TableRow> rows;
  rows.push_back({"SL", "Convolution", dim_str(cfg_.input_h, cfg_.input_w, b),
                  "3x3/1 (32)", sl_unit_.conv_param_count()});
  rows.push_back({"SL", "Max Pool", dim_str(sl_pooled.h, sl_pooled.w, b),
                  "4x1/(4,1)", 0});
  for (std::int64_t l = 1; l <= cfg_.blocks; ++l) {
    const auto& block = blocks_[static_cast<std::size_t>(l - 1)];
    const std::string name = std::string("Inception (") + block_letter(l) + ")";
    const std::int64_t c_out = b + InceptionBlock::kGrowth * l;
    rows.push_back({"BM", name + ", top", "-",
                    "[1x1/1 (32) conv]*3, [3x3/1 max pool]*1",
                    block.top_param_count()});
    rows.push_back({"BM", name + ", bottom",
                    dim_str(sl_pooled.h, sl_pooled.w, c_out),
                    "[3x3/1 (32) conv]*1, [5x5/1 (32) conv]*1, [1x1/1 (32) conv]*1",
                    block.bottom_param_count()});
  }
  rows.push_back({"TL", "Convolution", dim_str(sl_pooled.h, sl_pooled.w, b),
                  "1x1/1 (32)", tl_unit_.conv_param_count()});
  rows.push_back({"TL", cfg_.tl_max_pool ? "Max Pool" : "Avg Pool",
                  dim_str(tl_pooled.h, tl_pooled.w, b), "2x2/2", 0});
  rows.push_back({"DL", "Global Average Pool", dim_str(1, 1, b), "-", 0});
  rows.push_back({"DL", "Softmax", std::to_string(cfg_.n_classes), "-",
                  head_.param_count()});
  return rows;
}

std::int64_t BbnnModel::count_params(bool full) const {
  std::int64_t total = sl_unit_.conv_param_count();
  for (const auto& b : blocks_) {
    total += b.top_param_count() + b.bottom_param_count();
  }
  total += tl_unit_.conv_param_count() + head_.param_count();
  if (full) {
    std::int64_t bn_channels = sl_unit_.bn.channels();
    for (const auto& b : blocks_) {
      bn_channels += b.p1x1.bn.channels() + b.reduce3.bn.channels() +
                     b.conv3.bn.channels() + b.reduce5.bn.channels() +
                     b.conv5.bn.channels() + b.pool_proj.bn.channels();
    }
    bn_channels += tl_unit_.bn.channels();
    total += 2 * bn_channels;
  }
  return total;
}

void BbnnModel::save(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_u16(os, kVersion);
  write_u16(os, static_cast<std::uint16_t>(cfg_.n_classes));
  write_u16(os, static_cast<std::uint16_t>(cfg_.blocks));
  TensorRegistry reg = collect_tensors();
  for (const auto& nt : reg.state) {
    write_u16(os, static_cast<std::uint16_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    const Shape4 s = nt.tensor->shape();
    write_u32(os, static_cast<std::uint32_t>(s.n));
    write_u32(os, static_cast<std::uint32_t>(s.h));
    write_u32(os, static_cast<std::uint32_t>(s.w));
    write_u32(os, static_cast<std::uint32_t>(s.c));
    os.write(reinterpret_cast<const char*>(nt.tensor->data()),
             static_cast<std::streamsize>(nt.tensor->size() * sizeof(float)));
  }
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

BbnnModel BbnnModel::load(const std::string& path, ModelConfig base) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint16_t version = read_u16(is, "version");
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  base.n_classes = read_u16(is, "class count");
  base.blocks = read_u16(is, "block count");
  BbnnModel model(base);
  TensorRegistry reg = model.collect_tensors();
  for (auto& nt : reg.state) {
    const std::uint16_t len = read_u16(is, "tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) {
      throw DataError("checkpoint: truncated reading tensor name");
    }
    if (name != nt.name) {
      throw DataError("checkpoint: expected tensor '" + nt.name + "', found '" +
                      name + "'");
    }
    const Shape4 s{static_cast<std::int64_t>(read_u32(is, "dim")),
                   static_cast<std::int64_t>(read_u32(is, "dim")),
                   static_cast<std::int64_t>(read_u32(is, "dim")),
                   static_cast<std::int64_t>(read_u32(is, "dim"))};
    if (!(s == nt.tensor->shape())) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + s.str() +
                      ", expected " + nt.tensor->shape().str());
    }
    if (!is.read(reinterpret_cast<char*>(nt.tensor->data()),
                 static_cast<std::streamsize>(nt.tensor->size() * sizeof(float)))) {
      throw DataError("checkpoint: truncated reading tensor '" + name + "'");
    }
  }
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw DataError("checkpoint: trailing bytes in " + path);
  }
  return model;
}

}  // namespace bbnn
