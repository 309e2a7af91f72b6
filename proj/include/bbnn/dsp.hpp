#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "bbnn/tensor.hpp"

namespace bbnn {

struct MelConfig {
  int sample_rate = 22050;
  int n_fft = 2048;  // must be a power of two (radix-2 transform)
  int hop = 1024;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 22050.0;  // kept verbatim even above Nyquist; top filters are empty
  int target_frames = 647;
  double log_floor_db = -80.0;

  void validate() const;  // throws ShapeError on nonsense combinations
};

struct AudioClip {
  std::vector<float> samples;  // mono, [-1,1]
  int rate = 0;
};

// RIFF/WAVE decode: PCM16 or float32, 1-2 channels, averaged to mono.
AudioClip decode_wav(const std::string& path);
// PCM16 writer used by tests and corpus tooling. Clamps to [-1,1].
void write_wav_pcm16(const std::string& path, const std::vector<float>& samples,
                     int rate);

std::vector<float> resample_linear(const std::vector<float>& in, int rate_in,
                                   int rate_out);

// In-place iterative radix-2 transform; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse = false);

struct PowerSpec {
  std::int64_t frames = 0;
  std::int64_t bins = 0;          // n_fft/2 + 1
  std::vector<double> p;          // frames x bins, row-major
  double at(std::int64_t t, std::int64_t k) const {
    return p[static_cast<std::size_t>(t * bins + k)];
  }
};

// Center-aligned STFT: reflection pad n_fft/2 each side, periodic Hann window,
// squared magnitudes. frames = 1 + floor(len/hop).
PowerSpec stft_power(const std::vector<float>& samples, const MelConfig& cfg);

// Slaney-scale triangular filters, area-normalized; n_mels x (n_fft/2+1).
std::vector<double> mel_filterbank(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelSpectrogram {
  std::int64_t frames = 0;
  std::int64_t bands = 0;
  std::vector<float> v;  // frames x bands, row-major, in [0,1]
  std::string source_id;
  float at(std::int64_t t, std::int64_t m) const {
    return v[static_cast<std::size_t>(t * bands + m)];
  }
};

// Mel projection, dB re per-clip max with floor, affine map to [0,1], time
// axis fixed to target_frames (repeat-last-frame pad / truncate). A silent
// clip comes out all zero.
MelSpectrogram to_logmel(const PowerSpec& ps, const MelConfig& cfg);

// decode -> resample if needed -> stft -> logmel; source_id = path.
MelSpectrogram extract_logmel(const std::string& wav_path, const MelConfig& cfg);

struct CorpusFile {
  std::string genre;
  std::uint16_t genre_idx = 0;
  std::string path;
};

struct CorpusScan {
  std::vector<std::string> genres;  // sorted directory names
  std::vector<CorpusFile> files;    // sorted by (genre, filename)
};

// Layout root/<genre>/*.wav; deterministic ordering.
CorpusScan scan_corpus(const std::string& root);

struct CachedClip {
  std::uint16_t genre_idx = 0;
  std::string genre_label;
  std::vector<float> mel;  // target_frames * n_mels
};

void write_mel_cache(const std::string& path,
                     const std::vector<CachedClip>& clips);
// Dimensions come from cfg; the file stores none.
std::vector<CachedClip> read_mel_cache(const std::string& path,
                                       const MelConfig& cfg);

// Genre labels indexed by genre_idx; throws DataError on gaps or conflicts.
std::vector<std::string> genres_from_cache(const std::vector<CachedClip>& clips);

}  // namespace bbnn
