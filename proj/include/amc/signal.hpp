#pragma once

// Synthetic labeled I/Q frames over an AWGN channel, and the binary dataset
// format that stores them.
//
// Label indices are fixed (one-hot order):
//   0 BPSK  1 QPSK  2 8PSK  3 PAM4  4 QAM16  5 QAM64
//   6 GFSK  7 CPFSK 8 WBFM  9 AM-DSB 10 AM-SSB

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amc {

enum class Modulation : std::uint8_t {
    BPSK = 0,
    QPSK,
    PSK8,
    PAM4,
    QAM16,
    QAM64,
    GFSK,
    CPFSK,
    WBFM,
    AM_DSB,
    AM_SSB,
};

inline constexpr std::size_t kNumModulations = 11;

std::string_view modulation_name(Modulation m);
std::optional<Modulation> parse_modulation(std::string_view name);
Modulation modulation_from_index(std::size_t index);
inline std::size_t modulation_index(Modulation m) { return static_cast<std::size_t>(m); }

// BPSK..CPFSK carry bits; WBFM and the AM schemes are driven by a message.
bool is_digital(Modulation m);
// Schemes with a finite constellation (BPSK..QAM64).
bool has_constellation(Modulation m);
std::size_t bits_per_symbol(Modulation m);

using Complex = std::complex<double>;

// Gray-coded constellation in bit-pattern order (point i encodes the
// bits of i, MSB first), scaled to unit average energy.
std::vector<Complex> constellation(Modulation m);

// bits: one bit per element (0/1), MSB first within each symbol.
std::vector<Complex> map_symbols(Modulation m, std::span<const std::uint8_t> bits);

// Root-raised-cosine taps, span * sps + 1 long, normalized to unit energy.
std::vector<double> rrc_taps(std::size_t sps, double rolloff, std::size_t span);

// Zero-stuff by sps (symbol k at sample k*sps) and convolve with rrc_taps.
// Output length is (symbols - 1) * sps + taps.
std::vector<Complex> rrc_filter(std::span<const Complex> symbols, std::size_t sps, double rolloff = 0.35,
                                std::size_t span = 8);

// Scaled so that mean |x|^2 == 1. Throws on an all-zero signal.
std::vector<Complex> normalize_rms(std::span<const Complex> signal);

// Circular complex Gaussian noise with total variance 10^(-snr_db/10),
// half in each of I and Q. Assumes a unit-power input.
std::vector<Complex> add_awgn(std::span<const Complex> signal, double snr_db, std::mt19937_64& rng);

struct GeneratorConfig {
    std::size_t frame_length = 128;
    std::size_t samples_per_symbol = 8;
    double rolloff = 0.35;
    std::size_t filter_span = 8;
    // Zero a random burst inside some frames before normalization, imitating
    // silent periods in captured data. Off by default.
    bool silent_bursts = false;
};

// Fixed synthesis constants for the schemes without a constellation.
namespace synth {
inline constexpr double kGaussianBT = 0.35;
inline constexpr double kFskModIndex = 0.5;
inline constexpr std::size_t kGaussianSpan = 4;
inline constexpr double kMessageFreqs[3] = {0.01, 0.023, 0.041};
inline constexpr double kMessageNoiseDb = -10.0;
inline constexpr double kMessageNoiseCutoff = 0.05;
inline constexpr double kAmIndex = 0.5;
inline constexpr double kWbfmDeviation = 0.1;
inline constexpr std::size_t kHilbertTaps = 65;
inline constexpr double kBurstProbability = 0.25;
}  // namespace synth

struct FrameRecord {
    Modulation label = Modulation::BPSK;
    int snr_db = 0;
    std::uint64_t seed = 0;
    // 2 x N, row-major: I[0..N) then Q[0..N).
    std::vector<float> iq;

    std::size_t length() const noexcept { return iq.size() / 2; }
    bool operator==(const FrameRecord&) const = default;
};

struct SynthesizedFrame {
    std::vector<Complex> clean;  // unit average power
    std::vector<Complex> noisy;
};

// Deterministic in (scheme, snr_db, seed, config).
SynthesizedFrame synthesize_frame(Modulation m, int snr_db, std::uint64_t seed, const GeneratorConfig& config);
FrameRecord modulate_frame(Modulation m, int snr_db, std::uint64_t seed, const GeneratorConfig& config);

struct DatasetManifest {
    static constexpr std::uint16_t kFormatVersion = 1;

    std::vector<Modulation> schemes;
    std::vector<int> snrs_db;
    std::size_t frames_per_cell = 0;
    std::size_t frame_length = 128;
    std::size_t samples_per_symbol = 8;
    std::uint64_t master_seed = 0;
    std::uint16_t format_version = kFormatVersion;
    bool silent_bursts = false;

    std::size_t total_frames() const { return schemes.size() * snrs_db.size() * frames_per_cell; }
    GeneratorConfig generator() const;
    bool operator==(const DatasetManifest&) const = default;
};

// All 11 schemes, -20..+18 dB step 2.
DatasetManifest default_manifest();
std::vector<int> snr_range(int lo, int hi, int step);

std::uint64_t instance_seed(std::uint64_t master_seed, std::size_t scheme_index, std::size_t snr_index,
                            std::size_t frame_index);

// Scheme-major, then SNR, then frame index. Output does not depend on threads.
std::vector<FrameRecord> generate_records(const DatasetManifest& manifest, std::size_t threads = 1);

void generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& data_path,
                      const std::filesystem::path& manifest_path, std::size_t threads = 1);

// Little-endian: "AMC1", u16 version, u64 record count, u32 frame length;
// per record: u8 scheme, i8 snr_db, u64 seed, 2N float32 (I row, Q row).
void write_dataset(const std::filesystem::path& path, std::span<const FrameRecord> records);
std::vector<FrameRecord> read_dataset(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

struct DatasetSplit {
    std::vector<FrameRecord> train;
    std::vector<FrameRecord> test;
};

// Stratified by (scheme, SNR) cell; each cell is shuffled with a seed derived
// from `seed` and the cell key, then round(ratio * n) frames go to train.
DatasetSplit split_dataset(std::span<const FrameRecord> records, double ratio, std::uint64_t seed);

}  // namespace amc
