#include "amc/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "amc/error.hpp"
#include "binary_io.hpp"

namespace amc {

namespace {

constexpr std::array<std::string_view, kNumModulations> kNames = {
    "BPSK", "QPSK", "8PSK", "PAM4", "QAM16", "QAM64", "GFSK", "CPFSK", "WBFM", "AM-DSB", "AM-SSB"};

constexpr double kPi = std::numbers::pi;

std::uint32_t gray(std::uint32_t v) { return v ^ (v >> 1); }

// Gray-coded PAM levels for `bits` bits: pattern -> amplitude in
// {-(L-1), ..., L-1}, odd integers, unnormalized.
std::vector<double> gray_pam_levels(std::size_t bits) {
    const std::uint32_t L = 1u << bits;
    std::vector<double> levels(L);
    for (std::uint32_t pos = 0; pos < L; ++pos) {
        levels[gray(pos)] = -double(L - 1) + 2.0 * double(pos);
    }
    return levels;
}

std::vector<Complex> scale_unit_energy(std::vector<Complex> points) {
    double energy = 0.0;
    for (const auto& p : points) energy += std::norm(p);
    energy /= double(points.size());
    const double s = 1.0 / std::sqrt(energy);
    for (auto& p : points) p *= s;
    return points;
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
    return bits;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::vector<double> convolve_same(std::span<const double> x, std::span<const double> taps) {
    const std::size_t half = taps.size() / 2;
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const std::ptrdiff_t idx = std::ptrdiff_t(n + half) - std::ptrdiff_t(k);
            if (idx >= 0 && idx < std::ptrdiff_t(x.size())) acc += taps[k] * x[std::size_t(idx)];
        }
        y[n] = acc;
    }
    return y;
}

std::vector<double> gaussian_taps(double bt, std::size_t sps, std::size_t span) {
    const std::size_t n = span * sps + 1;
    std::vector<double> taps(n);
    const double a = 2.0 * kPi * kPi * bt * bt / std::log(2.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (double(i) - double(n - 1) / 2.0) / double(sps);
        taps[i] = std::exp(-a * t * t);
        total += taps[i];
    }
    for (auto& v : taps) v /= total;
    return taps;
}

// Continuous-phase FSK. Each bit drives +/-1 for sps samples; the optional
// Gaussian filter turns CPFSK into GFSK.
std::vector<Complex> fsk_waveform(std::size_t n_bits, bool gaussian, const GeneratorConfig& cfg,
                                  std::mt19937_64& rng) {
    const std::size_t sps = cfg.samples_per_symbol;
    const auto bits = random_bits(n_bits, rng);
    std::vector<double> freq(n_bits * sps);
    for (std::size_t i = 0; i < freq.size(); ++i) freq[i] = bits[i / sps] ? 1.0 : -1.0;
    if (gaussian) freq = convolve_same(freq, gaussian_taps(synth::kGaussianBT, sps, synth::kGaussianSpan));
    std::vector<Complex> out(freq.size());
    double phase = 0.0;
    for (std::size_t i = 0; i < freq.size(); ++i) {
        phase += kPi * synth::kFskModIndex * freq[i] / double(sps);
        out[i] = std::polar(1.0, phase);
    }
    return out;
}

// Three tones plus low-pass Gaussian noise at -10 dB, scaled to unit peak.
std::vector<double> analog_message(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * kPi);
    std::array<double, 3> phases{};
    for (auto& p : phases) p = phase_dist(rng);

    std::vector<double> msg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < 3; ++t) msg[i] += std::sin(2.0 * kPi * synth::kMessageFreqs[t] * double(i) + phases[t]);
    }

    // windowed-sinc low-pass, 31 taps
    constexpr std::size_t kTaps = 31;
    std::vector<double> lp(kTaps);
    for (std::size_t k = 0; k < kTaps; ++k) {
        const double m = double(k) - double(kTaps - 1) / 2.0;
        const double fc = synth::kMessageNoiseCutoff;
        const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
        lp[k] = sinc * (0.54 - 0.46 * std::cos(2.0 * kPi * double(k) / double(kTaps - 1)));
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> white(n);
    for (auto& v : white) v = gauss(rng);
    auto noise = convolve_same(white, lp);

    const double tone_power = 1.5;
    double noise_power = 0.0;
    for (double v : noise) noise_power += v * v;
    noise_power /= double(n);
    const double target = tone_power * std::pow(10.0, synth::kMessageNoiseDb / 10.0);
    const double gain = noise_power > 0.0 ? std::sqrt(target / noise_power) : 0.0;
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        msg[i] += gain * noise[i];
        peak = std::max(peak, std::abs(msg[i]));
    }
    for (auto& v : msg) v /= peak;
    return msg;
}

std::vector<double> hilbert_taps(std::size_t n) {
    std::vector<double> taps(n, 0.0);
    const std::ptrdiff_t mid = std::ptrdiff_t(n / 2);
    for (std::size_t k = 0; k < n; ++k) {
        const std::ptrdiff_t m = std::ptrdiff_t(k) - mid;
        if (m % 2 == 0) continue;
        const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * double(k) / double(n - 1));
        taps[k] = 2.0 / (kPi * double(m)) * window;
    }
    return taps;
}

std::vector<Complex> analog_waveform(Modulation m, std::size_t n, std::mt19937_64& rng) {
    const auto msg = analog_message(n, rng);
    std::vector<Complex> out(n);
    switch (m) {
        case Modulation::AM_DSB:
            for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 + synth::kAmIndex * msg[i];
            break;
        case Modulation::AM_SSB: {
            const auto quad = convolve_same(msg, hilbert_taps(synth::kHilbertTaps));
            for (std::size_t i = 0; i < n; ++i) out[i] = Complex(msg[i], quad[i]);
            break;
        }
        case Modulation::WBFM: {
            double phase = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                phase += 2.0 * kPi * synth::kWbfmDeviation * msg[i];
                out[i] = std::polar(1.0, phase);
            }
            break;
        }
        default:
            throw Error(ErrorKind::InvalidArgument, "analog_waveform: not an analog scheme");
    }
    return out;
}

void check_generator(const GeneratorConfig& cfg) {
    if (cfg.frame_length == 0) throw Error(ErrorKind::InvalidArgument, "frame length must be positive");
    if (cfg.samples_per_symbol < 2) throw Error(ErrorKind::InvalidArgument, "samples per symbol must be >= 2");
}

}  // namespace

std::string_view modulation_name(Modulation m) { return kNames.at(modulation_index(m)); }

std::optional<Modulation> parse_modulation(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return static_cast<Modulation>(i);
    }
    return std::nullopt;
}

Modulation modulation_from_index(std::size_t index) {
    if (index >= kNumModulations) {
        throw Error(ErrorKind::InvalidArgument, "modulation index " + std::to_string(index) + " out of range 0..10");
    }
    return static_cast<Modulation>(index);
}

bool is_digital(Modulation m) { return modulation_index(m) <= modulation_index(Modulation::CPFSK); }

bool has_constellation(Modulation m) { return modulation_index(m) <= modulation_index(Modulation::QAM64); }

std::size_t bits_per_symbol(Modulation m) {
    switch (m) {
        case Modulation::BPSK: return 1;
        case Modulation::QPSK: return 2;
        case Modulation::PSK8: return 3;
        case Modulation::PAM4: return 2;
        case Modulation::QAM16: return 4;
        case Modulation::QAM64: return 6;
        case Modulation::GFSK:
        case Modulation::CPFSK: return 1;
        default:
            throw Error(ErrorKind::InvalidArgument, std::string(modulation_name(m)) +
                                                        " is analog; use the message-driven path (synthesize_frame)");
    }
}

std::vector<Complex> constellation(Modulation m) {
    if (!has_constellation(m)) {
        throw Error(ErrorKind::InvalidArgument, std::string(modulation_name(m)) +
                                                    " has no constellation; FSK and analog schemes are synthesized by "
                                                    "synthesize_frame");
    }
    std::vector<Complex> pts;
    switch (m) {
        case Modulation::BPSK:
            pts = {Complex(1, 0), Complex(-1, 0)};
            break;
        case Modulation::QPSK:
            for (std::uint32_t v = 0; v < 4; ++v) {
                pts.emplace_back((v & 2) ? -1.0 : 1.0, (v & 1) ? -1.0 : 1.0);
            }
            break;
        case Modulation::PSK8:
            pts.resize(8);
            for (std::uint32_t pos = 0; pos < 8; ++pos) pts[gray(pos)] = std::polar(1.0, 2.0 * kPi * double(pos) / 8.0);
            break;
        case Modulation::PAM4:
            for (double level : gray_pam_levels(2)) pts.emplace_back(level, 0.0);
            break;
        case Modulation::QAM16:
        case Modulation::QAM64: {
            const std::size_t half = bits_per_symbol(m) / 2;
            const auto levels = gray_pam_levels(half);
            const std::uint32_t L = 1u << half;
            for (std::uint32_t v = 0; v < L * L; ++v) pts.emplace_back(levels[v >> half], levels[v & (L - 1)]);
            break;
        }
        default:
            break;
    }
    return scale_unit_energy(std::move(pts));
}

std::vector<Complex> map_symbols(Modulation m, std::span<const std::uint8_t> bits) {
    const std::size_t bps = bits_per_symbol(m);
    if (!has_constellation(m)) {
        throw Error(ErrorKind::InvalidArgument, std::string(modulation_name(m)) +
                                                    " is frequency-modulated; bits are mapped inside synthesize_frame");
    }
    if (bits.size() % bps != 0) {
        throw Error(ErrorKind::InvalidArgument, "map_symbols: " + std::to_string(bits.size()) +
                                                    " bits is not a multiple of " + std::to_string(bps));
    }
    const auto pts = constellation(m);
    std::vector<Complex> out;
    out.reserve(bits.size() / bps);
    for (std::size_t i = 0; i < bits.size(); i += bps) {
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < bps; ++b) v = (v << 1) | (bits[i + b] & 1u);
        out.push_back(pts[v]);
    }
    return out;
}

std::vector<double> rrc_taps(std::size_t sps, double rolloff, std::size_t span) {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "rrc rolloff must be in (0, 1], got " + std::to_string(rolloff));
    }
    if (sps < 2) throw Error(ErrorKind::InvalidArgument, "rrc needs at least 2 samples per symbol");
    const std::size_t n = span * sps + 1;
    const double b = rolloff;
    std::vector<double> taps(n);
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (double(i) - double(n - 1) / 2.0) / double(sps);
        double h;
        if (std::abs(t) < 1e-12) {
            h = 1.0 - b + 4.0 * b / kPi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-12) {
            h = b / std::sqrt(2.0) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * b)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * b)));
        } else {
            h = (std::sin(kPi * t * (1.0 - b)) + 4.0 * b * t * std::cos(kPi * t * (1.0 + b))) /
                (kPi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t)));
        }
        taps[i] = h;
        energy += h * h;
    }
    const double s = 1.0 / std::sqrt(energy);
    for (auto& v : taps) v *= s;
    return taps;
}

std::vector<Complex> rrc_filter(std::span<const Complex> symbols, std::size_t sps, double rolloff, std::size_t span) {
    const auto taps = rrc_taps(sps, rolloff, span);
    if (symbols.empty()) return {};
    std::vector<Complex> out((symbols.size() - 1) * sps + taps.size(), Complex(0, 0));
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const Complex s = symbols[k];
        Complex* o = out.data() + k * sps;
        for (std::size_t t = 0; t < taps.size(); ++t) o[t] += s * taps[t];
    }
    return out;
}

std::vector<Complex> normalize_rms(std::span<const Complex> signal) {
    double power = 0.0;
    for (const auto& x : signal) power += std::norm(x);
    if (signal.empty() || power == 0.0) {
        throw Error(ErrorKind::InvalidArgument, "normalize_rms: signal is all zero");
    }
    power /= double(signal.size());
    const double s = 1.0 / std::sqrt(power);
    std::vector<Complex> out(signal.begin(), signal.end());
    for (auto& x : out) x *= s;
    return out;
}

std::vector<Complex> add_awgn(std::span<const Complex> signal, double snr_db, std::mt19937_64& rng) {
    const double sigma = std::sqrt(std::pow(10.0, -snr_db / 10.0) / 2.0);
    std::normal_distribution<double> gauss(0.0, sigma);
    std::vector<Complex> out(signal.begin(), signal.end());
    for (auto& x : out) {
        const double ni = gauss(rng);
        const double nq = gauss(rng);
        x += Complex(ni, nq);
    }
    return out;
}

SynthesizedFrame synthesize_frame(Modulation m, int snr_db, std::uint64_t seed, const GeneratorConfig& cfg) {
    check_generator(cfg);
    std::mt19937_64 rng(seed);
    const std::size_t N = cfg.frame_length;
    const std::size_t sps = cfg.samples_per_symbol;

    std::vector<Complex> waveform;
    std::size_t lo = 0, window = 1;  // crop offset drawn from [lo, lo + window)
    if (has_constellation(m)) {
        const std::size_t n_sym = (N + sps - 1) / sps + 2 * cfg.filter_span + 2;
        const auto bits = random_bits(n_sym * bits_per_symbol(m), rng);
        waveform = rrc_filter(map_symbols(m, bits), sps, cfg.rolloff, cfg.filter_span);
        lo = cfg.filter_span * sps;
        window = 2 * sps;
    } else if (m == Modulation::GFSK || m == Modulation::CPFSK) {
        const std::size_t n_bits = (N + sps - 1) / sps + 2 * synth::kGaussianSpan;
        waveform = fsk_waveform(n_bits, m == Modulation::GFSK, cfg, rng);
        lo = synth::kGaussianSpan * sps / 2;
        window = 2 * sps;
    } else {
        const std::size_t margin = synth::kHilbertTaps;
        waveform = analog_waveform(m, N + 2 * margin, rng);
        lo = margin / 2 + 1;
        window = margin / 2;
    }
    const std::size_t offset = lo + uniform_index(rng, window);
    std::vector<Complex> frame(waveform.begin() + std::ptrdiff_t(offset),
                               waveform.begin() + std::ptrdiff_t(offset + N));

    if (cfg.silent_bursts && N > 1 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < synth::kBurstProbability) {
        const std::size_t shortest = std::max<std::size_t>(1, N / 8);
        const std::size_t longest = std::max(shortest, std::min(N - 1, N / 2));
        const std::size_t len = shortest + uniform_index(rng, longest - shortest + 1);
        const std::size_t start = uniform_index(rng, N - len + 1);
        std::fill(frame.begin() + std::ptrdiff_t(start), frame.begin() + std::ptrdiff_t(start + len), Complex(0, 0));
    }

    SynthesizedFrame out;
    out.clean = normalize_rms(frame);
    out.noisy = add_awgn(out.clean, double(snr_db), rng);
    return out;
}

FrameRecord modulate_frame(Modulation m, int snr_db, std::uint64_t seed, const GeneratorConfig& cfg) {
    if (snr_db < -128 || snr_db > 127) {
        throw Error(ErrorKind::InvalidArgument, "snr_db " + std::to_string(snr_db) + " does not fit the i8 file field");
    }
    const auto frame = synthesize_frame(m, snr_db, seed, cfg);
    FrameRecord rec;
    rec.label = m;
    rec.snr_db = snr_db;
    rec.seed = seed;
    const std::size_t N = frame.noisy.size();
    rec.iq.resize(2 * N);
    for (std::size_t i = 0; i < N; ++i) {
        rec.iq[i] = static_cast<float>(frame.noisy[i].real());
        rec.iq[N + i] = static_cast<float>(frame.noisy[i].imag());
    }
    return rec;
}

GeneratorConfig DatasetManifest::generator() const {
    GeneratorConfig g;
    g.frame_length = frame_length;
    g.samples_per_symbol = samples_per_symbol;
    g.silent_bursts = silent_bursts;
    return g;
}

std::vector<int> snr_range(int lo, int hi, int step) {
    if (step <= 0 || hi < lo) throw Error(ErrorKind::InvalidArgument, "snr range needs lo <= hi and step > 0");
    std::vector<int> out;
    for (int s = lo; s <= hi; s += step) out.push_back(s);
    return out;
}

DatasetManifest default_manifest() {
    DatasetManifest m;
    for (std::size_t i = 0; i < kNumModulations; ++i) m.schemes.push_back(static_cast<Modulation>(i));
    m.snrs_db = snr_range(-20, 18, 2);
    m.frames_per_cell = 1000;
    return m;
}

std::uint64_t instance_seed(std::uint64_t master_seed, std::size_t scheme_index, std::size_t snr_index,
                            std::size_t frame_index) {
    std::uint64_t h = detail::mix64(master_seed);
    h = detail::hash_combine(h, scheme_index);
    h = detail::hash_combine(h, snr_index);
    return detail::hash_combine(h, frame_index);
}

std::vector<FrameRecord> generate_records(const DatasetManifest& manifest, std::size_t threads) {
    if (manifest.schemes.empty() || manifest.snrs_db.empty() || manifest.frames_per_cell == 0) {
        throw Error(ErrorKind::InvalidArgument, "manifest must list schemes, SNRs and a positive frames_per_cell");
    }
    const auto gen = manifest.generator();
    const std::size_t total = manifest.total_frames();
    const std::size_t per_scheme = manifest.snrs_db.size() * manifest.frames_per_cell;
    std::vector<FrameRecord> records(total);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t s = i / per_scheme;
            const std::size_t q = (i % per_scheme) / manifest.frames_per_cell;
            const std::size_t f = i % manifest.frames_per_cell;
            const Modulation m = manifest.schemes[s];
            records[i] = modulate_frame(m, manifest.snrs_db[q], instance_seed(manifest.master_seed, modulation_index(m), q, f), gen);
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, total));
    if (threads == 1) {
        work(0, total);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (total + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(total, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
    }
    return records;
}

void generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& data_path,
                      const std::filesystem::path& manifest_path, std::size_t threads) {
    const auto records = generate_records(manifest, threads);
    write_dataset(data_path, records);
    write_manifest(manifest_path, manifest);
}

void write_dataset(const std::filesystem::path& path, std::span<const FrameRecord> records) {
    const std::uint32_t N = records.empty() ? 0 : static_cast<std::uint32_t>(records.front().length());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    os.write("AMC1", 4);
    detail::write_le<std::uint16_t>(os, DatasetManifest::kFormatVersion);
    detail::write_le<std::uint64_t>(os, records.size());
    detail::write_le<std::uint32_t>(os, N);
    for (const auto& r : records) {
        if (r.length() != N || r.iq.size() != 2 * std::size_t(N)) {
            throw Error(ErrorKind::InvalidArgument, "write_dataset: records have mixed frame lengths");
        }
        detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(r.label));
        detail::write_le<std::int8_t>(os, static_cast<std::int8_t>(r.snr_db));
        detail::write_le<std::uint64_t>(os, r.seed);
        for (float v : r.iq) detail::write_le<float>(os, v);
    }
    if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<FrameRecord> read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
    const std::string ctx = "dataset " + path.string();
    char magic[4] = {};
    if (!is.read(magic, 4)) throw Error(ErrorKind::Truncated, ctx + ": file shorter than its header");
    if (std::string_view(magic, 4) != "AMC1") throw Error(ErrorKind::BadMagic, ctx + ": bad magic, expected AMC1");
    const auto version = detail::read_le<std::uint16_t>(is, ctx);
    if (version != DatasetManifest::kFormatVersion) {
        throw Error(ErrorKind::VersionMismatch, ctx + ": format version " + std::to_string(version) +
                                                    ", this build reads version " +
                                                    std::to_string(DatasetManifest::kFormatVersion));
    }
    const auto count = detail::read_le<std::uint64_t>(is, ctx);
    const auto N = detail::read_le<std::uint32_t>(is, ctx);

    // The header count must agree with the payload length exactly.
    const auto header_end = is.tellg();
    is.seekg(0, std::ios::end);
    const auto file_end = is.tellg();
    is.seekg(header_end);
    const std::uint64_t record_bytes = 1 + 1 + 8 + 8ull * N;
    const std::uint64_t payload = std::uint64_t(file_end - header_end);
    if (payload < count * record_bytes) {
        throw Error(ErrorKind::Truncated, ctx + ": header declares " + std::to_string(count) + " records but payload holds " +
                                              std::to_string(payload / record_bytes));
    }
    if (payload > count * record_bytes) {
        throw Error(ErrorKind::InvalidArgument, ctx + ": " + std::to_string(payload - count * record_bytes) +
                                                    " trailing bytes after the declared records");
    }

    std::vector<FrameRecord> records(count);
    for (auto& r : records) {
        r.label = modulation_from_index(detail::read_le<std::uint8_t>(is, ctx));
        r.snr_db = detail::read_le<std::int8_t>(is, ctx);
        r.seed = detail::read_le<std::uint64_t>(is, ctx);
        r.iq.resize(2 * std::size_t(N));
        for (auto& v : r.iq) v = detail::read_le<float>(is, ctx);
    }
    return records;
}

std::string manifest_to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["format_version"] = m.format_version;
    std::vector<std::string> names;
    for (auto s : m.schemes) names.emplace_back(modulation_name(s));
    j["schemes"] = names;
    j["snrs_db"] = m.snrs_db;
    j["frames_per_cell"] = m.frames_per_cell;
    j["frame_length"] = m.frame_length;
    j["samples_per_symbol"] = m.samples_per_symbol;
    j["master_seed"] = m.master_seed;
    j["silent_bursts"] = m.silent_bursts;
    j["total_frames"] = m.total_frames();
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        DatasetManifest m;
        m.format_version = j.value("format_version", DatasetManifest::kFormatVersion);
        for (const auto& name : j.at("schemes")) {
            const auto s = parse_modulation(name.get<std::string>());
            if (!s) throw Error(ErrorKind::Config, "unknown modulation '" + name.get<std::string>() + "'");
            m.schemes.push_back(*s);
        }
        m.snrs_db = j.at("snrs_db").get<std::vector<int>>();
        m.frames_per_cell = j.at("frames_per_cell").get<std::size_t>();
        m.frame_length = j.value("frame_length", std::size_t{128});
        m.samples_per_symbol = j.value("samples_per_symbol", std::size_t{8});
        m.master_seed = j.value("master_seed", std::uint64_t{0});
        m.silent_bursts = j.value("silent_bursts", false);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("manifest: ") + e.what());
    }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    os << manifest_to_json(manifest);
    if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return manifest_from_json(ss.str());
}

DatasetSplit split_dataset(std::span<const FrameRecord> records, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "split ratio must lie in (0, 1), got " + std::to_string(ratio));
    }
    // cells in order of first appearance
    std::vector<std::pair<std::pair<int, int>, std::vector<std::size_t>>> cells;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::pair<int, int> key{int(records[i].label), records[i].snr_db};
        auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.first == key; });
        if (it == cells.end()) {
            cells.push_back({key, {}});
            it = cells.end() - 1;
        }
        it->second.push_back(i);
    }

    DatasetSplit out;
    for (auto& [key, idx] : cells) {
        const std::size_t n = idx.size();
        const auto n_train = static_cast<std::size_t>(std::llround(ratio * double(n)));
        if (n_train == 0 || n_train == n) {
            throw Error(ErrorKind::InvalidArgument,
                        "cell (" + std::string(modulation_name(static_cast<Modulation>(key.first))) + ", " +
                            std::to_string(key.second) + " dB) has " + std::to_string(n) +
                            " frames, too few to stratify at ratio " + std::to_string(ratio));
        }
        std::uint64_t cell_seed = detail::hash_combine(detail::mix64(seed), std::uint64_t(key.first));
        cell_seed = detail::hash_combine(cell_seed, std::uint64_t(std::int64_t(key.second)));
        std::mt19937_64 rng(cell_seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.train : out.test).push_back(records[idx[i]]);
    }
    return out;
}

}  // namespace amc
