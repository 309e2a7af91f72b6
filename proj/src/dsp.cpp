#include "bbnn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace bbnn {
namespace {

namespace fs = std::filesystem;

bool is_pow2(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// reflect-101 fold into [0, n); the single-sample signal maps everything to 0
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate < 1) throw ShapeError("mel config: sample_rate must be positive");
  if (!is_pow2(n_fft)) {
    throw ShapeError("mel config: n_fft must be a power of two, got " +
                     std::to_string(n_fft));
  }
  if (hop < 1 || hop > n_fft) {
    throw ShapeError("mel config: need 1 <= hop <= n_fft");
  }
  if (n_mels < 1) throw ShapeError("mel config: n_mels must be positive");
  if (fmin < 0 || fmax <= fmin) throw ShapeError("mel config: need 0 <= fmin < fmax");
  if (fmax > sample_rate) {
    throw ShapeError("mel config: fmax beyond the sample rate");
  }
  if (target_frames < 1) throw ShapeError("mel config: target_frames must be positive");
  if (log_floor_db >= 0) throw ShapeError("mel config: log_floor_db must be negative");
}

AudioClip decode_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("wav: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  const unsigned char* d = reinterpret_cast<const unsigned char*>(buf.data());
  const std::size_t size = buf.size();

  if (size < 12 || std::memcmp(d, "RIFF", 4) != 0 || std::memcmp(d + 8, "WAVE", 4) != 0) {
    throw DataError("wav: not a RIFF/WAVE file: " + path);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const char* id = buf.data() + pos;
    const std::uint32_t chunk_len = get_u32(d + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16 || body + 16 > size) {
        throw DataError("wav: malformed fmt chunk: " + path);
      }
      format = get_u16(d + body);
      channels = get_u16(d + body + 2);
      rate = get_u32(d + body + 4);
      bits = get_u16(d + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      have_data = true;
    }
    pos = body + chunk_len + (chunk_len & 1);
  }

  if (!have_fmt || !have_data || rate == 0) {
    throw DataError("wav: missing fmt or data chunk: " + path);
  }
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!(pcm16 || f32) || channels < 1 || channels > 2) {
    throw DataError("wav: unsupported encoding (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits, " +
                    std::to_string(channels) + " channels): " + path);
  }
  const std::size_t bytes_per = (pcm16 ? 2u : 4u) * channels;
  if (data_off + data_len > size || data_len % bytes_per != 0) {
    throw DataError("wav: truncated data chunk: " + path);
  }

  const std::size_t n = data_len / bytes_per;
  AudioClip clip;
  clip.rate = static_cast<int>(rate);
  clip.samples.resize(n);
  const unsigned char* p = d + data_off;
  for (std::size_t i = 0; i < n; ++i) {
    float mixed = 0.0f;
    for (std::uint16_t ch = 0; ch < channels; ++ch) {
      float v;
      if (pcm16) {
        const std::int16_t s = static_cast<std::int16_t>(get_u16(p));
        v = static_cast<float>(s) / 32768.0f;
        p += 2;
      } else {
        std::uint32_t bits32 = get_u32(p);
        std::memcpy(&v, &bits32, 4);
        p += 4;
      }
      mixed += v;
    }
    clip.samples[i] = channels == 2 ? 0.5f * mixed : mixed;
  }
  return clip;
}

void write_wav_pcm16(const std::string& path, const std::vector<float>& samples,
                     int rate) {
  std::string out;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(rate));
  put_u32(out, static_cast<std::uint32_t>(rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_len);
  for (float v : samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    const long q = std::lrintf(c * 32768.0f);
    put_u16(out, static_cast<std::uint16_t>(
                     std::clamp<long>(q, -32768, 32767) & 0xffff));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os || !os.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    throw DataError("wav: cannot write " + path);
  }
}

std::vector<float> resample_linear(const std::vector<float>& in, int rate_in,
                                   int rate_out) {
  if (rate_in < 1 || rate_out < 1) throw ShapeError("resample: rates must be positive");
  if (rate_in == rate_out || in.empty()) return in;
  const std::int64_t n = static_cast<std::int64_t>(in.size());
  const std::int64_t n_out =
      (n - 1) * rate_out / rate_in + 1;  // keeps every source position in range
  std::vector<float> out(static_cast<std::size_t>(n_out));
  const double scale = static_cast<double>(rate_in) / rate_out;
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double src = i * scale;
    const std::int64_t i0 = static_cast<std::int64_t>(src);
    const std::int64_t i1 = std::min(i0 + 1, n - 1);
    const double frac = src - static_cast<double>(i0);
    out[static_cast<std::size_t>(i)] = static_cast<float>(
        (1.0 - frac) * in[static_cast<std::size_t>(i0)] +
        frac * in[static_cast<std::size_t>(i1)]);
  }
  return out;
}

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(static_cast<std::int64_t>(n))) {
    throw ShapeError("fft: size must be a power of two, got " + std::to_string(n));
  }
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

PowerSpec stft_power(const std::vector<float>& samples, const MelConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw ShapeError("stft: empty signal");
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  const std::int64_t n_fft = cfg.n_fft;
  const std::int64_t half = n_fft / 2;

  std::vector<double> window(static_cast<std::size_t>(n_fft));
  for (std::int64_t j = 0; j < n_fft; ++j) {
    window[static_cast<std::size_t>(j)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(j) /
                             static_cast<double>(n_fft));
  }

  PowerSpec ps;
  ps.frames = 1 + n / cfg.hop;
  ps.bins = half + 1;
  ps.p.assign(static_cast<std::size_t>(ps.frames * ps.bins), 0.0);

#pragma omp parallel for
  for (std::int64_t t = 0; t < ps.frames; ++t) {
    std::vector<std::complex<double>> frame(static_cast<std::size_t>(n_fft));
    const std::int64_t start = t * cfg.hop - half;
    for (std::int64_t j = 0; j < n_fft; ++j) {
      const std::int64_t src = reflect_index(start + j, n);
      frame[static_cast<std::size_t>(j)] =
          static_cast<double>(samples[static_cast<std::size_t>(src)]) *
          window[static_cast<std::size_t>(j)];
    }
    fft_radix2(frame);
    double* row = ps.p.data() + t * ps.bins;
    for (std::int64_t k = 0; k <= half; ++k) {
      row[k] = std::norm(frame[static_cast<std::size_t>(k)]);
    }
  }
  return ps;
}

double hz_to_mel(double hz) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  const double f_sp = 200.0 / 3.0;
  const double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const std::int64_t bins = cfg.n_fft / 2 + 1;
  const std::int64_t M = cfg.n_mels;

  std::vector<double> hz(static_cast<std::size_t>(M + 2));
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  for (std::int64_t i = 0; i < M + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(M + 1);
    hz[static_cast<std::size_t>(i)] = mel_to_hz(mel);
  }

  std::vector<double> fb(static_cast<std::size_t>(M * bins), 0.0);
  for (std::int64_t m = 0; m < M; ++m) {
    const double lo = hz[static_cast<std::size_t>(m)];
    const double mid = hz[static_cast<std::size_t>(m + 1)];
    const double hi = hz[static_cast<std::size_t>(m + 2)];
    const double norm = 2.0 / (hi - lo);  // area normalization
    for (std::int64_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate /
                       static_cast<double>(cfg.n_fft);
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(up, down));
      fb[static_cast<std::size_t>(m * bins + k)] = w * norm;
    }
  }
  return fb;
}

MelSpectrogram to_logmel(const PowerSpec& ps, const MelConfig& cfg) {
  cfg.validate();
  const std::int64_t bins = cfg.n_fft / 2 + 1;
  if (ps.bins != bins || ps.frames < 1) {
    throw ShapeError("logmel: power spectrogram " + std::to_string(ps.frames) +
                     "x" + std::to_string(ps.bins) + " does not match n_fft " +
                     std::to_string(cfg.n_fft));
  }
  const std::vector<double> fb = mel_filterbank(cfg);
  const std::int64_t M = cfg.n_mels;

  std::vector<double> mel(static_cast<std::size_t>(ps.frames * M), 0.0);
#pragma omp parallel for
  for (std::int64_t t = 0; t < ps.frames; ++t) {
    const double* prow = ps.p.data() + t * ps.bins;
    double* mrow = mel.data() + t * M;
    for (std::int64_t m = 0; m < M; ++m) {
      const double* frow = fb.data() + m * bins;
      double acc = 0.0;
      for (std::int64_t k = 0; k < bins; ++k) acc += frow[k] * prow[k];
      mrow[static_cast<std::size_t>(m)] = acc;
    }
  }

  MelSpectrogram out;
  out.frames = cfg.target_frames;
  out.bands = M;
  out.v.assign(static_cast<std::size_t>(out.frames * out.bands), 0.0f);

  double ref = 0.0;
  for (double v : mel) ref = std::max(ref, v);
  if (ref <= 0.0) return out;  // silent clip

  const double floor_db = cfg.log_floor_db;
  for (std::int64_t t = 0; t < out.frames; ++t) {
    const std::int64_t src = std::min(t, ps.frames - 1);  // repeat-last-frame pad
    const double* mrow = mel.data() + src * M;
    float* orow = out.v.data() + t * M;
    for (std::int64_t m = 0; m < M; ++m) {
      const double ratio = mrow[m] / ref;
      double db = 10.0 * std::log10(std::max(ratio, 1e-30));
      db = std::max(db, floor_db);
      orow[m] = static_cast<float>((db - floor_db) / -floor_db);
    }
  }
  return out;
}

MelSpectrogram extract_logmel(const std::string& wav_path, const MelConfig& cfg) {
  cfg.validate();
  AudioClip clip = decode_wav(wav_path);
  if (clip.samples.empty()) throw DataError("wav: no samples in " + wav_path);
  if (clip.rate != cfg.sample_rate) {
    clip.samples = resample_linear(clip.samples, clip.rate, cfg.sample_rate);
  }
  MelSpectrogram mel = to_logmel(stft_power(clip.samples, cfg), cfg);
  mel.source_id = wav_path;
  return mel;
}

CorpusScan scan_corpus(const std::string& root) {
  if (!fs::is_directory(root)) {
    throw DataError("corpus: not a directory: " + root);
  }
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  }
  std::sort(dirs.begin(), dirs.end());

  CorpusScan scan;
  for (const std::string& genre : dirs) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / genre)) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".wav") files.push_back(e.path().string());
    }
    if (files.empty()) continue;  // a genre with no clips contributes nothing
    std::sort(files.begin(), files.end());
    const std::uint16_t idx = static_cast<std::uint16_t>(scan.genres.size());
    scan.genres.push_back(genre);
    for (std::string& f : files) scan.files.push_back({genre, idx, std::move(f)});
  }
  return scan;
}

void write_mel_cache(const std::string& path,
                     const std::vector<CachedClip>& clips) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cache: cannot open " + path + " for writing");
  std::string head = "MELC";
  put_u16(head, 1);  // version
  put_u32(head, static_cast<std::uint32_t>(clips.size()));
  os.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& c : clips) {
    std::string rec;
    put_u16(rec, c.genre_idx);
    put_u16(rec, static_cast<std::uint16_t>(c.genre_label.size()));
    rec += c.genre_label;
    os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    os.write(reinterpret_cast<const char*>(c.mel.data()),
             static_cast<std::streamsize>(c.mel.size() * sizeof(float)));
  }
  if (!os) throw DataError("cache: write failed for " + path);
}

std::vector<CachedClip> read_mel_cache(const std::string& path,
                                       const MelConfig& cfg) {
  cfg.validate();
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw DataError("cache: cannot open " + path +
                    " (run the preprocess command to create it)");
  }
  char magic[4];
  unsigned char hdr[6];
  if (!is.read(magic, 4) || std::memcmp(magic, "MELC", 4) != 0) {
    throw DataError("cache: bad magic in " + path);
  }
  if (!is.read(reinterpret_cast<char*>(hdr), 6)) {
    throw DataError("cache: truncated header in " + path);
  }
  const std::uint16_t version = get_u16(hdr);
  if (version != 1) {
    throw DataError("cache: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = get_u32(hdr + 2);
  const std::size_t cells =
      static_cast<std::size_t>(cfg.target_frames) * static_cast<std::size_t>(cfg.n_mels);

  std::vector<CachedClip> clips(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    unsigned char rec[4];
    if (!is.read(reinterpret_cast<char*>(rec), 4)) {
      throw DataError("cache: truncated clip header in " + path);
    }
    CachedClip& c = clips[i];
    c.genre_idx = get_u16(rec);
    const std::uint16_t len = get_u16(rec + 2);
    c.genre_label.resize(len);
    if (len > 0 && !is.read(c.genre_label.data(), len)) {
      throw DataError("cache: truncated genre label in " + path);
    }
    c.mel.resize(cells);
    if (!is.read(reinterpret_cast<char*>(c.mel.data()),
                 static_cast<std::streamsize>(cells * sizeof(float)))) {
      throw DataError("cache: truncated mel data in " + path +
                      " (cache dimensions must match the mel settings)");
    }
  }
  if (is.peek() != std::ifstream::traits_type::eof()) {
    throw DataError("cache: trailing bytes in " + path +
                    " (cache dimensions must match the mel settings)");
  }
  return clips;
}

std::vector<std::string> genres_from_cache(const std::vector<CachedClip>& clips) {
  if (clips.empty()) throw DataError("cache: holds no clips");
  std::uint16_t max_idx = 0;
  for (const auto& c : clips) max_idx = std::max(max_idx, c.genre_idx);
  std::vector<std::string> genres(static_cast<std::size_t>(max_idx) + 1);
  std::vector<bool> seen(genres.size(), false);
  for (const auto& c : clips) {
    std::string& slot = genres[c.genre_idx];
    if (!seen[c.genre_idx]) {
      slot = c.genre_label;
      seen[c.genre_idx] = true;
    } else if (slot != c.genre_label) {
      throw DataError("cache: genre index " + std::to_string(c.genre_idx) +
                      " maps to both '" + slot + "' and '" + c.genre_label + "'");
    }
  }
  for (std::size_t i = 0; i < genres.size(); ++i) {
    if (!seen[i]) {
      throw DataError("cache: no clips for genre index " + std::to_string(i));
    }
  }
  return genres;
}

}  // namespace bbnn
