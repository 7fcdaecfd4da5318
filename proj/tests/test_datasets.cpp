#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "seqlab/data.hpp"

using namespace seqlab;
using testutil::ScratchDir;

TEST_CASE("load_wav maps 16-bit samples onto [-1, 1]") {
  ScratchDir dir("wav");
  testutil::write_wav(dir.file("a.wav"), {0, 32767, -32768});
  auto seq = data::load_wav(dir.file("a.wav"));
  REQUIRE(seq.frames.size() == 3);
  CHECK(seq.frames[0] == doctest::Approx(0.0));
  CHECK(seq.frames[1] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(seq.frames[2] == doctest::Approx(-1.0));
  for (double v : seq.frames) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("load_wav length equals sample count") {
  ScratchDir dir("wavlen");
  std::vector<std::int16_t> samples(257);
  for (size_t i = 0; i < samples.size(); ++i)
    samples[i] = static_cast<std::int16_t>(37 * i - 4000);
  testutil::write_wav(dir.file("b.wav"), samples);
  CHECK(data::load_wav(dir.file("b.wav")).frames.size() == samples.size());
}

TEST_CASE("load_wav rejects bad formats") {
  ScratchDir dir("wavbad");
  testutil::write_wav(dir.file("empty.wav"), {});
  CHECK_THROWS_WITH_AS(data::load_wav(dir.file("empty.wav")),
                       doctest::Contains("empty sequence"), std::runtime_error);
  testutil::write_wav(dir.file("stereo.wav"), {0, 0}, /*channels=*/2);
  CHECK_THROWS_WITH_AS(data::load_wav(dir.file("stereo.wav")),
                       doctest::Contains("multi-channel"), std::runtime_error);
  testutil::write_wav(dir.file("float.wav"), {0, 0}, 1, 16, /*audio_format=*/3);
  CHECK_THROWS_AS(data::load_wav(dir.file("float.wav")), std::runtime_error);
  CHECK_THROWS_AS(data::load_wav(dir.file("missing.wav")), std::runtime_error);
}

TEST_CASE("load_pianoroll parses 88-column binary lines") {
  ScratchDir dir("roll");
  std::string zeros;
  for (int i = 0; i < 88; ++i) zeros += i ? ",0" : "0";
  {
    std::ofstream out(dir.file("ok.csv"));
    out << zeros << "\n" << zeros << "\n";
  }
  auto seq = data::load_pianoroll(dir.file("ok.csv"));
  CHECK(seq.T() == 2);
  CHECK(seq.L() == 88);
  CHECK(seq.steps.cwiseAbs().maxCoeff() == 0.0);
  for (auto k : seq.kinds) CHECK(k == data::ElementKind::Binary);

  {
    std::ofstream out(dir.file("short.csv"));
    out << zeros << "\n" << zeros.substr(0, zeros.size() - 2) << "\n";
  }
  CHECK_THROWS_WITH_AS(data::load_pianoroll(dir.file("short.csv")),
                       doctest::Contains("line 2"), std::runtime_error);

  {
    std::ofstream out(dir.file("nonbin.csv"));
    std::string bad = zeros;
    bad[0] = '2';
    out << bad << "\n";
  }
  CHECK_THROWS_WITH_AS(data::load_pianoroll(dir.file("nonbin.csv")),
                       doctest::Contains("non-binary"), std::runtime_error);
}

TEST_CASE("load_trajectory parses pen-state plus coordinates") {
  ScratchDir dir("traj");
  {
    std::ofstream out(dir.file("ok.csv"));
    out << "1,0.5,-0.25\n0,0.125,2\n";
  }
  auto seq = data::load_trajectory(dir.file("ok.csv"));
  REQUIRE(seq.T() == 2);
  REQUIRE(seq.L() == 3);
  CHECK(seq.steps(0, 0) == 1.0);
  CHECK(seq.steps(0, 1) == 0.5);
  CHECK(seq.steps(0, 2) == -0.25);
  CHECK(seq.kinds[0] == data::ElementKind::Binary);
  CHECK(seq.kinds[1] == data::ElementKind::Continuous);
  CHECK(seq.kinds[2] == data::ElementKind::Continuous);

  {
    std::ofstream out(dir.file("pen.csv"));
    out << "0.5,0,0\n";
  }
  CHECK_THROWS_WITH_AS(data::load_trajectory(dir.file("pen.csv")),
                       doctest::Contains("pen dimension not binary"), std::runtime_error);
  {
    std::ofstream out(dir.file("empty.csv"));
  }
  CHECK_THROWS_WITH_AS(data::load_trajectory(dir.file("empty.csv")),
                       doctest::Contains("empty sequence"), std::runtime_error);
}

TEST_CASE("reshape_multiframe windows frames row-major and drops the remainder") {
  data::FrameSequence f;
  SUBCASE("8000 frames at L=200, T=40 give one 40x200 sequence") {
    f.frames.resize(8000);
    for (size_t i = 0; i < f.frames.size(); ++i) f.frames[i] = static_cast<double>(i);
    auto out = data::reshape_multiframe(f, 200, 40);
    REQUIRE(out.size() == 1);
    CHECK(out[0].T() == 40);
    CHECK(out[0].L() == 200);
    // row-major: step t holds frames [200t, 200t+200)
    CHECK(out[0].steps(3, 17) == 3 * 200 + 17);
  }
  SUBCASE("8001 frames drop the trailing frame") {
    f.frames.assign(8001, 1.0);
    auto out = data::reshape_multiframe(f, 200, 40);
    CHECK(out.size() == 1);
  }
  SUBCASE("6 frames at L=1, T=3 give the two halves") {
    f.frames = {1, 2, 3, 4, 5, 6};
    auto out = data::reshape_multiframe(f, 1, 3);
    REQUIRE(out.size() == 2);
    CHECK(out[0].steps(0, 0) == 1);
    CHECK(out[0].steps(2, 0) == 3);
    CHECK(out[1].steps(0, 0) == 4);
    CHECK(out[1].steps(2, 0) == 6);
  }
  SUBCASE("shorter than one window gives an empty list") {
    f.frames = {1, 2, 3};
    CHECK(data::reshape_multiframe(f, 2, 2).empty());
  }
}

TEST_CASE("stride_subsample keeps one frame of every M") {
  data::FrameSequence f;
  for (int i = 1; i <= 10; ++i) f.frames.push_back(i);
  SUBCASE("M=3 keeps frames 1,4,7,10") {
    auto out = data::stride_subsample(f, 3);
    CHECK(out.frames == std::vector<double>{1, 4, 7, 10});
  }
  SUBCASE("M=1 is the identity") {
    CHECK(data::stride_subsample(f, 1).frames == f.frames);
  }
  SUBCASE("M beyond the length keeps the first frame") {
    CHECK(data::stride_subsample(f, 50).frames == std::vector<double>{1});
  }
}

TEST_CASE("permute_steps applies one fixed order to every step") {
  data::StepSequence s;
  s.steps.resize(2, 3);
  s.steps << 1, 2, 3, 4, 5, 6;
  s.kinds.assign(3, data::ElementKind::Continuous);

  SUBCASE("identity permutation") {
    auto out = data::permute_steps(s, {0, 1, 2});
    CHECK((out.steps - s.steps).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("reversal") {
    auto out = data::permute_steps(s, {2, 1, 0});
    CHECK(out.steps(0, 0) == 3);
    CHECK(out.steps(0, 2) == 1);
    CHECK(out.steps(1, 0) == 6);
  }
  SUBCASE("perm then inverse recovers the input") {
    std::vector<int> perm = {1, 2, 0};
    std::vector<int> inv(3);
    for (int i = 0; i < 3; ++i) inv[perm[i]] = i;
    auto out = data::permute_steps(data::permute_steps(s, perm), inv);
    CHECK((out.steps - s.steps).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("non-bijection rejected") {
    CHECK_THROWS_AS(data::permute_steps(s, {0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(data::permute_steps(s, {0, 1}), std::invalid_argument);
  }
}

TEST_CASE("flatten_steps is the row-major inverse of reshape_multiframe") {
  data::StepSequence s;
  s.steps.resize(2, 3);
  s.steps << 1, 2, 3, 4, 5, 6;
  s.kinds.assign(3, data::ElementKind::Continuous);
  auto flat = data::flatten_steps(s);
  CHECK(flat.frames == std::vector<double>{1, 2, 3, 4, 5, 6});
  auto back = data::reshape_multiframe(flat, 3, 2);
  REQUIRE(back.size() == 1);
  CHECK((back[0].steps - s.steps).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("L=1 equals the step column") {
    data::StepSequence col;
    col.steps.resize(3, 1);
    col.steps << 7, 8, 9;
    col.kinds = {data::ElementKind::Continuous};
    CHECK(data::flatten_steps(col).frames == std::vector<double>{7, 8, 9});
  }
  SUBCASE("mixed kinds rejected") {
    s.kinds[0] = data::ElementKind::Binary;
    CHECK_THROWS_WITH_AS(data::flatten_steps(s),
                         doctest::Contains("flat model not applicable"),
                         std::invalid_argument);
  }
}

TEST_CASE("leak splits partition the index set") {
  SUBCASE("interleave U=2 on L=6 leaks the odd positions") {
    auto sp = data::make_leak_split_interleave(6, 2);
    CHECK(sp.a_indices == std::vector<int>{0, 2, 4});
    CHECK(sp.b_indices == std::vector<int>{1, 3, 5});
  }
  SUBCASE("interleave U=3 on L=6") {
    auto sp = data::make_leak_split_interleave(6, 3);
    CHECK(sp.a_indices == std::vector<int>{0, 3});
  }
  SUBCASE("random V=2 is deterministic in the seed and partitions") {
    auto a = data::make_leak_split_random(4, 2, 99);
    auto b = data::make_leak_split_random(4, 2, 99);
    CHECK(a.a_indices == b.a_indices);
    CHECK(a.a_indices.size() == 2);
    std::vector<bool> seen(4, false);
    for (int i : a.a_indices) seen[i] = true;
    for (int i : a.b_indices) {
      CHECK(!seen[i]);
      seen[i] = true;
    }
    for (bool s : seen) CHECK(s);
  }
  SUBCASE("degenerate splits rejected") {
    CHECK_THROWS_AS(data::make_leak_split_interleave(4, 1), std::invalid_argument);
    CHECK_THROWS_AS(data::make_leak_split_interleave(4, 5), std::invalid_argument);
    CHECK_THROWS_AS(data::make_leak_split_random(4, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(data::make_leak_split_random(4, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("synth_generate is a pure function of the spec") {
  data::SyntheticSpec spec;
  spec.T = 5;
  spec.L = 4;
  spec.num_sequences = 6;
  spec.seed = 12;
  auto a = data::synth_generate(spec);
  auto b = data::synth_generate(spec);
  REQUIRE(a.size() == 6);
  for (size_t i = 0; i < a.size(); ++i) CHECK((a[i].steps - b[i].steps).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("within-step-AR lag-1 correlation matches rho") {
  // sample-statistics oracle over ~1e5 steps
  data::SyntheticSpec spec;
  spec.family = data::SynthFamily::WithinStepAR;
  spec.rho = 0.9;
  spec.T = 100;
  spec.L = 8;
  spec.num_sequences = 1000;
  spec.seed = 77;
  auto seqs = data::synth_generate(spec);

  double sxy = 0, sxx = 0, syy = 0, sx = 0, sy = 0;
  long n = 0;
  for (const auto& s : seqs)
    for (int t = 0; t < s.T(); ++t)
      for (int i = 0; i + 1 < s.L(); ++i) {
        double x = s.steps(t, i), y = s.steps(t, i + 1);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
        ++n;
      }
  double mx = sx / n, my = sy / n;
  double corr = (sxy / n - mx * my) /
                std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
  // SE of a correlation estimate ~ (1 - rho^2)/sqrt(n)
  double se = (1.0 - 0.9 * 0.9) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(corr - 0.9) <= 3.0 * se);
}

TEST_CASE("rho=0 gives uncorrelated within-step elements") {
  data::SyntheticSpec spec;
  spec.rho = 0.0;
  spec.across = 0.0;
  spec.T = 100;
  spec.L = 8;
  spec.num_sequences = 500;
  spec.seed = 5;
  auto seqs = data::synth_generate(spec);
  double sxy = 0;
  long n = 0;
  for (const auto& s : seqs)
    for (int t = 0; t < s.T(); ++t)
      for (int i = 0; i + 1 < s.L(); ++i) {
        sxy += s.steps(t, i) * s.steps(t, i + 1);
        ++n;
      }
  CHECK(std::abs(sxy / n) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("make_batches covers each sequence once in seed-determined order") {
  auto batches = data::make_batches(10, 3, 21);
  REQUIRE(batches.size() == 4);
  CHECK(batches[0].indices.size() == 3);
  CHECK(batches[3].indices.size() == 1);
  std::vector<bool> seen(10, false);
  for (const auto& b : batches)
    for (int i : b.indices) {
      CHECK(!seen[i]);
      seen[i] = true;
    }
  for (bool s : seen) CHECK(s);

  SUBCASE("same seed reproduces the order") {
    auto again = data::make_batches(10, 3, 21);
    for (size_t i = 0; i < batches.size(); ++i)
      CHECK(batches[i].indices == again[i].indices);
  }
  SUBCASE("different seeds permute differently on 100 sequences") {
    auto a = data::make_batches(100, 100, 1);
    auto b = data::make_batches(100, 100, 2);
    CHECK(a[0].indices != b[0].indices);
  }
  SUBCASE("empty dataset rejected") {
    CHECK_THROWS_AS(data::make_batches(0, 3, 1), std::invalid_argument);
  }
}

TEST_CASE("csv step round-trip preserves values and kinds") {
  ScratchDir dir("csv");
  auto seq = testutil::tiny_sequence(4, 3, 9);
  data::save_csv_steps(seq, dir.file("s.csv"));
  auto back = data::load_csv_steps(dir.file("s.csv"));
  REQUIRE(back.T() == seq.T());
  REQUIRE(back.L() == seq.L());
  CHECK((back.steps - seq.steps).cwiseAbs().maxCoeff() == 0.0);
}
