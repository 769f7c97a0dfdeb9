#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "amc/signal.hpp"
#include "test_support.hpp"

namespace amc {
namespace {

const double kSqrtHalf = std::sqrt(0.5);

std::vector<Modulation> all_schemes() {
    std::vector<Modulation> out;
    for (std::size_t i = 0; i < kNumModulations; ++i) out.push_back(modulation_from_index(i));
    return out;
}

TEST(Modulation, NamesRoundTripAndIndicesAreFixed) {
    const char* names[] = {"BPSK", "QPSK", "8PSK", "PAM4", "QAM16", "QAM64",
                           "GFSK", "CPFSK", "WBFM", "AM-DSB", "AM-SSB"};
    for (std::size_t i = 0; i < kNumModulations; ++i) {
        const auto m = modulation_from_index(i);
        EXPECT_EQ(modulation_name(m), names[i]);
        EXPECT_EQ(parse_modulation(names[i]), m);
    }
    EXPECT_FALSE(parse_modulation("QAM256").has_value());
    EXPECT_THROW(modulation_from_index(11), Error);
}

TEST(Constellation, EveryPointSetHasUnitEnergy) {
    for (auto m : all_schemes()) {
        if (!has_constellation(m)) continue;
        const auto pts = constellation(m);
        EXPECT_EQ(pts.size(), std::size_t(1) << bits_per_symbol(m));
        double e = 0.0;
        for (const auto& p : pts) e += std::norm(p);
        EXPECT_NEAR(e / double(pts.size()), 1.0, 1e-12) << modulation_name(m);
    }
}

TEST(Constellation, NeighboursDifferInOneBit) {
    // Gray property: nearest neighbours differ in exactly one bit.
    for (auto m : {Modulation::QPSK, Modulation::PSK8, Modulation::PAM4, Modulation::QAM16, Modulation::QAM64}) {
        const auto pts = constellation(m);
        double dmin = 1e9;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j) dmin = std::min(dmin, std::abs(pts[i] - pts[j]));
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j)
                if (std::abs(pts[i] - pts[j]) < dmin * 1.0001) {
                    EXPECT_EQ(std::popcount(unsigned(i ^ j)), 1) << modulation_name(m) << " " << i << " " << j;
                }
    }
}

TEST(MapSymbols, Examples) {
    const std::vector<std::uint8_t> bpsk = {0, 1};
    const auto b = map_symbols(Modulation::BPSK, bpsk);
    EXPECT_EQ(b[0], Complex(1, 0));
    EXPECT_EQ(b[1], Complex(-1, 0));

    const std::vector<std::uint8_t> qpsk = {0, 0, 1, 1, 0, 1};
    const auto q = map_symbols(Modulation::QPSK, qpsk);
    EXPECT_NEAR(std::abs(q[0] - Complex(kSqrtHalf, kSqrtHalf)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(q[1] - Complex(-kSqrtHalf, -kSqrtHalf)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(q[2] - Complex(kSqrtHalf, -kSqrtHalf)), 0.0, 1e-15);
}

TEST(MapSymbols, Errors) {
    const std::vector<std::uint8_t> three = {0, 1, 0};
    EXPECT_EQ(test::thrown_kind([&] { map_symbols(Modulation::QPSK, three); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(test::thrown_kind([&] { map_symbols(Modulation::GFSK, three); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(test::thrown_kind([&] { map_symbols(Modulation::WBFM, three); }), ErrorKind::InvalidArgument);
}

TEST(Rrc, TapsHaveUnitEnergyAndAreSymmetric) {
    const auto taps = rrc_taps(8, 0.35, 8);
    ASSERT_EQ(taps.size(), 65u);
    double e = 0.0;
    for (double t : taps) e += t * t;
    EXPECT_NEAR(e, 1.0, 1e-9);
    for (std::size_t i = 0; i < taps.size(); ++i) EXPECT_NEAR(taps[i], taps[taps.size() - 1 - i], 1e-15);
}

TEST(Rrc, MatchedPairIsNyquist) {
    // RRC * RRC is a raised cosine: zero at nonzero multiples of the symbol
    // period (up to truncation of the span).
    const std::size_t sps = 8;
    const auto taps = rrc_taps(sps, 0.35, 8);
    std::vector<double> rc(2 * taps.size() - 1, 0.0);
    for (std::size_t i = 0; i < taps.size(); ++i)
        for (std::size_t j = 0; j < taps.size(); ++j) rc[i + j] += taps[i] * taps[j];
    const std::size_t center = taps.size() - 1;
    EXPECT_NEAR(rc[center], 1.0, 1e-12);
    for (std::size_t k = 1; k * sps <= center; ++k) {
        EXPECT_LT(std::abs(rc[center + k * sps]), 2e-2) << k;
        EXPECT_LT(std::abs(rc[center - k * sps]), 2e-2) << k;
    }
}

TEST(Rrc, ImpulseAndSuperposition) {
    const auto taps = rrc_taps(8, 0.35, 8);
    const std::vector<Complex> one = {Complex(1, 0)};
    const auto y = rrc_filter(one, 8);
    ASSERT_EQ(y.size(), taps.size());
    for (std::size_t i = 0; i < taps.size(); ++i) EXPECT_EQ(y[i], Complex(taps[i], 0));

    const std::vector<Complex> two = {Complex(1, 0), Complex(1, 0)};
    const auto z = rrc_filter(two, 8);
    ASSERT_EQ(z.size(), taps.size() + 8);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double want = (i < taps.size() ? taps[i] : 0.0) + (i >= 8 ? taps[i - 8] : 0.0);
        EXPECT_NEAR(z[i].real(), want, 1e-15);
    }
}

TEST(Rrc, RejectsBadRolloff) {
    EXPECT_EQ(test::thrown_kind([] { rrc_taps(8, 0.0, 8); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(test::thrown_kind([] { rrc_taps(8, 1.5, 8); }), ErrorKind::InvalidArgument);
    EXPECT_NO_THROW(rrc_taps(8, 1.0, 8));
}

TEST(NormalizeRms, Examples) {
    const std::vector<Complex> constant(10, Complex(2, 0));
    for (const auto& v : normalize_rms(constant)) EXPECT_NEAR(std::abs(v - Complex(1, 0)), 0.0, 1e-15);

    const std::vector<Complex> unit = {Complex(1, 0), Complex(0, -1), Complex(kSqrtHalf, kSqrtHalf)};
    const auto u = normalize_rms(unit);
    for (std::size_t i = 0; i < unit.size(); ++i) EXPECT_NEAR(std::abs(u[i] - unit[i]), 0.0, 1e-15);

    const std::vector<Complex> mixed = {Complex(3, 4), Complex(-1, 2), Complex(0.5, -7)};
    const auto m = normalize_rms(mixed);
    for (std::size_t i = 0; i < mixed.size(); ++i) EXPECT_NEAR(std::arg(m[i]), std::arg(mixed[i]), 1e-15);

    const std::vector<Complex> zeros(4);
    EXPECT_EQ(test::thrown_kind([&] { normalize_rms(zeros); }), ErrorKind::InvalidArgument);
}

TEST(Awgn, EmpiricalVarianceMatchesTarget) {
    const std::size_t n = 1'000'000;
    const std::vector<Complex> zeros(n);
    for (double snr : {0.0, 10.0, -7.0}) {
        std::mt19937_64 rng(99);
        const auto y = add_awgn(zeros, snr, rng);
        double pi = 0.0, pq = 0.0;
        for (const auto& v : y) {
            pi += v.real() * v.real();
            pq += v.imag() * v.imag();
        }
        const double target = std::pow(10.0, -snr / 10.0);
        EXPECT_NEAR((pi + pq) / double(n), target, 0.01 * target) << snr;
        EXPECT_NEAR(pi / double(n), target / 2, 0.01 * target) << snr;
        EXPECT_NEAR(pq / double(n), target / 2, 0.01 * target) << snr;
    }
}

TEST(Synthesis, CleanFrameHasUnitPowerForEveryScheme) {
    const GeneratorConfig cfg;
    for (auto m : all_schemes()) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto f = synthesize_frame(m, 18, seed, cfg);
            ASSERT_EQ(f.clean.size(), cfg.frame_length);
            double p = 0.0;
            for (const auto& v : f.clean) p += std::norm(v);
            EXPECT_NEAR(p / double(cfg.frame_length), 1.0, 1e-6) << modulation_name(m);
        }
    }
}

TEST(Synthesis, BpskIsRealBeforeNoise) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto f = synthesize_frame(Modulation::BPSK, 0, seed, GeneratorConfig{});
        for (const auto& v : f.clean) EXPECT_LT(std::abs(v.imag()), 1e-9);
    }
}

TEST(Synthesis, FskAndFmHaveConstantEnvelope) {
    for (auto m : {Modulation::GFSK, Modulation::CPFSK, Modulation::WBFM}) {
        const auto f = synthesize_frame(m, 0, 5, GeneratorConfig{});
        for (const auto& v : f.clean) EXPECT_NEAR(std::abs(v), 1.0, 1e-9) << modulation_name(m);
    }
}

TEST(Synthesis, DeterministicAndSeedSensitive) {
    const GeneratorConfig cfg;
    for (auto m : all_schemes()) {
        const auto a = modulate_frame(m, 18, 1234, cfg);
        const auto b = modulate_frame(m, 18, 1234, cfg);
        const auto c = modulate_frame(m, 18, 1235, cfg);
        EXPECT_EQ(a, b);
        EXPECT_NE(a.iq, c.iq);
        for (float v : a.iq) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(Synthesis, RecordLayoutIsIRowThenQRow) {
    const GeneratorConfig cfg;
    const auto f = synthesize_frame(Modulation::QAM16, 4, 77, cfg);
    const auto r = modulate_frame(Modulation::QAM16, 4, 77, cfg);
    ASSERT_EQ(r.iq.size(), 2 * cfg.frame_length);
    for (std::size_t i = 0; i < cfg.frame_length; ++i) {
        EXPECT_EQ(r.iq[i], float(f.noisy[i].real()));
        EXPECT_EQ(r.iq[cfg.frame_length + i], float(f.noisy[i].imag()));
    }
}

TEST(Synthesis, SilentBurstsZeroPartOfSomeFrames) {
    GeneratorConfig cfg;
    cfg.silent_bursts = true;
    std::size_t with_gap = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto f = synthesize_frame(Modulation::QPSK, 10, seed, cfg);
        const auto zeros = std::count(f.clean.begin(), f.clean.end(), Complex(0, 0));
        if (zeros > 0) {
            ++with_gap;
            EXPECT_GE(zeros, std::ptrdiff_t(cfg.frame_length / 8));
        }
        double p = 0.0;
        for (const auto& v : f.clean) p += std::norm(v);
        EXPECT_NEAR(p / double(cfg.frame_length), 1.0, 1e-6);
    }
    EXPECT_GT(with_gap, 20u);
    EXPECT_LT(with_gap, 90u);
}

TEST(Synthesis, RejectsSnrOutsideFileRange) {
    EXPECT_EQ(test::thrown_kind([] { modulate_frame(Modulation::BPSK, 200, 1, GeneratorConfig{}); }),
              ErrorKind::InvalidArgument);
}

DatasetManifest small_manifest(std::uint64_t seed = 5) {
    DatasetManifest m;
    m.schemes = {Modulation::BPSK, Modulation::QAM64, Modulation::GFSK, Modulation::AM_SSB};
    m.snrs_db = {-10, 0, 10};
    m.frames_per_cell = 10;
    m.frame_length = 64;
    m.master_seed = seed;
    return m;
}

TEST(Dataset, CountsAndOrder) {
    EXPECT_EQ(default_manifest().total_frames(), 0u + 11 * 20 * default_manifest().frames_per_cell);
    auto full = default_manifest();
    full.frames_per_cell = 10;
    EXPECT_EQ(full.total_frames(), 2200u);
    EXPECT_EQ(full.snrs_db, snr_range(-20, 18, 2));

    const auto m = small_manifest();
    const auto recs = generate_records(m);
    ASSERT_EQ(recs.size(), 120u);
    std::size_t i = 0;
    for (std::size_t s = 0; s < m.schemes.size(); ++s)
        for (std::size_t q = 0; q < m.snrs_db.size(); ++q)
            for (std::size_t f = 0; f < m.frames_per_cell; ++f, ++i) {
                EXPECT_EQ(recs[i].label, m.schemes[s]);
                EXPECT_EQ(recs[i].snr_db, m.snrs_db[q]);
                EXPECT_EQ(recs[i].seed, instance_seed(m.master_seed, modulation_index(m.schemes[s]), q, f));
            }
}

TEST(Dataset, InstanceSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::size_t s = 0; s < 11; ++s)
        for (std::size_t q = 0; q < 20; ++q)
            for (std::size_t f = 0; f < 50; ++f) seen.insert(instance_seed(42, s, q, f));
    EXPECT_EQ(seen.size(), 11u * 20u * 50u);
}

TEST(Dataset, ThreadCountDoesNotChangeOutput) {
    const auto m = small_manifest();
    const auto one = generate_records(m, 1);
    EXPECT_EQ(one, generate_records(m, 3));
    EXPECT_EQ(one, generate_records(m, 8));
}

TEST(Dataset, FilesAreByteIdenticalPerSeed) {
    test::TempDir dir("dataset");
    generate_dataset(small_manifest(5), dir / "a.bin", dir / "a.json", 1);
    generate_dataset(small_manifest(5), dir / "b.bin", dir / "b.json", 4);
    generate_dataset(small_manifest(6), dir / "c.bin", dir / "c.json", 1);
    const auto a = test::read_bytes(dir / "a.bin");
    EXPECT_EQ(a, test::read_bytes(dir / "b.bin"));
    EXPECT_NE(a, test::read_bytes(dir / "c.bin"));
    EXPECT_EQ(test::read_bytes(dir / "a.json"), test::read_bytes(dir / "b.json"));
    EXPECT_EQ(read_manifest(dir / "a.json"), small_manifest(5));
    // header 18 bytes, records 10 + 2N*4
    EXPECT_EQ(a.size(), 18u + 120u * (10u + 2u * 64u * 4u));
}

TEST(Dataset, RoundTripIsLossless) {
    test::TempDir dir("roundtrip");
    const auto recs = generate_records(small_manifest());
    write_dataset(dir / "d.bin", recs);
    EXPECT_EQ(read_dataset(dir / "d.bin"), recs);
}

class CorruptDataset : public ::testing::Test {
protected:
    void SetUp() override {
        recs_ = generate_records(small_manifest());
        write_dataset(dir_ / "d.bin", recs_);
        bytes_ = test::read_bytes(dir_ / "d.bin");
    }
    ErrorKind read_modified(const std::string& bytes) {
        std::ofstream(dir_ / "x.bin", std::ios::binary) << bytes;
        return test::thrown_kind([&] { read_dataset(dir_ / "x.bin"); });
    }
    test::TempDir dir_{"corrupt"};
    std::vector<FrameRecord> recs_;
    std::string bytes_;
};

TEST_F(CorruptDataset, BadMagic) {
    auto b = bytes_;
    b[0] = 'X';
    EXPECT_EQ(read_modified(b), ErrorKind::BadMagic);
}

TEST_F(CorruptDataset, VersionMismatch) {
    auto b = bytes_;
    b[4] = 9;
    EXPECT_EQ(read_modified(b), ErrorKind::VersionMismatch);
}

TEST_F(CorruptDataset, TruncatedPayload) {
    EXPECT_EQ(read_modified(bytes_.substr(0, bytes_.size() - 3)), ErrorKind::Truncated);
    EXPECT_EQ(read_modified(bytes_.substr(0, 7)), ErrorKind::Truncated);
}

TEST_F(CorruptDataset, CountMustMatchPayload) {
    EXPECT_EQ(read_modified(bytes_ + std::string(10 + 2 * 64 * 4, '\0')), ErrorKind::InvalidArgument);
    auto b = bytes_;
    b[6] = char(b[6] + 1);  // header claims one more record
    EXPECT_EQ(read_modified(b), ErrorKind::Truncated);
}

TEST(Dataset, MissingFileIsIoError) {
    EXPECT_EQ(test::thrown_kind([] { read_dataset("/nonexistent/amc/data.bin"); }), ErrorKind::Io);
}

TEST(Manifest, JsonRoundTrip) {
    auto m = small_manifest();
    m.silent_bursts = true;
    EXPECT_EQ(manifest_from_json(manifest_to_json(m)), m);
    EXPECT_THROW(manifest_from_json("{\"schemes\": [\"FOO\"]}"), Error);
}

TEST(Split, StratifiedDisjointExhaustive) {
    const auto recs = generate_records(small_manifest());
    const auto s = split_dataset(recs, 0.8, 17);
    EXPECT_EQ(s.train.size(), 96u);
    EXPECT_EQ(s.test.size(), 24u);

    std::map<std::pair<Modulation, int>, std::size_t> train_cells, test_cells;
    for (const auto& r : s.train) ++train_cells[{r.label, r.snr_db}];
    for (const auto& r : s.test) ++test_cells[{r.label, r.snr_db}];
    EXPECT_EQ(train_cells.size(), 12u);
    for (const auto& [cell, n] : train_cells) EXPECT_EQ(n, 8u);
    for (const auto& [cell, n] : test_cells) EXPECT_EQ(n, 2u);

    std::multiset<std::uint64_t> all, parts;
    for (const auto& r : recs) all.insert(r.seed);
    for (const auto& r : s.train) parts.insert(r.seed);
    for (const auto& r : s.test) parts.insert(r.seed);
    EXPECT_EQ(all, parts);
    EXPECT_EQ(all.size(), std::set<std::uint64_t>(all.begin(), all.end()).size());

    const auto again = split_dataset(recs, 0.8, 17);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.test, s.test);
    EXPECT_NE(split_dataset(recs, 0.8, 18).train, s.train);
}

TEST(Split, Errors) {
    const auto recs = generate_records(small_manifest());
    EXPECT_EQ(test::thrown_kind([&] { split_dataset(recs, 1.0, 1); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(test::thrown_kind([&] { split_dataset(recs, 0.0, 1); }), ErrorKind::InvalidArgument);
    const std::vector<FrameRecord> one_cell(recs.begin(), recs.begin() + 1);
    EXPECT_EQ(test::thrown_kind([&] { split_dataset(one_cell, 0.8, 1); }), ErrorKind::InvalidArgument);
}

}  // namespace
}  // namespace amc
