#include <algorithm>
#include <cmath>
#include <set>

#include "../support/tempdir.hpp"
#include "auggen/dataset/stats.hpp"
#include "auggen/dataset/toy.hpp"
#include "auggen/numerics/rng.hpp"
#include "doctest.h"

using namespace auggen;
using namespace auggen::dataset;
using auggen::testing::read_file;
using auggen::testing::TempDir;

namespace {

DatasetManifest counts_manifest(const std::vector<int>& counts) {
  DatasetManifest m;
  m.class_count = static_cast<int>(counts.size());
  std::uint64_t id = 0;
  for (int c = 0; c < m.class_count; ++c)
    for (int k = 0; k < counts[static_cast<std::size_t>(c)]; ++k)
      m.records.push_back({id++, c, Provenance::orig, std::nullopt, "x"});
  return m;
}

ToyIdentitySpec small_spec(int classes, int per_class) {
  ToyIdentitySpec spec;
  spec.num_classes = classes;
  spec.samples_per_class = per_class;
  spec.image_size = 16;
  return spec;
}

}  // namespace

TEST_CASE("synth: two classes with one sample each") {
  TempDir dir("synth2");
  const auto m = synth_toy_dataset(small_spec(2, 1), 5, dir.path());
  REQUIRE(m.records.size() == 2);
  CHECK(m.records[0].class_id != m.records[1].class_id);
  CHECK(m.class_latents.size() == 2);
  CHECK(std::filesystem::exists(dir / kManifestFileName));
  m.validate();
}

TEST_CASE("synth is a pure function of (spec, seed)") {
  TempDir a("synth_a"), b("synth_b"), c("synth_c");
  const auto spec = small_spec(3, 4);
  const auto ma = synth_toy_dataset(spec, 11, a.path());
  const auto mb = synth_toy_dataset(spec, 11, b.path());
  const auto mc = synth_toy_dataset(spec, 12, c.path());
  REQUIRE(ma.records.size() == mb.records.size());
  for (std::size_t i = 0; i < ma.records.size(); ++i) {
    CHECK(read_file(ma.image_path(ma.records[i])) == read_file(mb.image_path(mb.records[i])));
  }
  CHECK(read_file(a / kManifestFileName) == read_file(b / kManifestFileName));
  CHECK(read_file(ma.image_path(ma.records[0])) != read_file(mc.image_path(mc.records[0])));
}

TEST_CASE("synth images stay in [-1, 1] and differ across identities more than within") {
  TempDir dir("synth_range");
  const auto m = synth_toy_dataset(small_spec(2, 3), 3, dir.path());
  const auto data = load_images(m);
  for (const auto& img : data.images)
    for (float v : img.values()) CHECK((v >= -1.0f && v <= 1.0f));
  auto dist = [](const Tensor& x, const Tensor& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
  };
  CHECK(dist(data.images[0], data.images[1]) < dist(data.images[0], data.images[3]));
}

TEST_CASE("long-tail counts follow the configured distribution (KS / DKW oracle)") {
  ToyIdentitySpec spec;
  spec.long_tail = LongTail{2, 60, 1.2};
  // Exact CDF by enumerating the truncated power law.
  std::vector<double> pmf;
  for (int n = 2; n <= 60; ++n) pmf.push_back(std::pow(n, -1.2));
  double z = 0;
  for (double p : pmf) z += p;
  auto cdf = [&](int n) {
    double s = 0;
    for (int k = 2; k <= std::min(n, 60); ++k) s += pmf[static_cast<std::size_t>(k - 2)] / z;
    return s;
  };
  for (int classes : {16, 2000}) {
    spec.num_classes = classes;
    const auto counts = draw_class_counts(spec, 99);
    double ks = 0;
    for (int n = 2; n <= 60; ++n) {
      const double emp = static_cast<double>(std::count_if(counts.begin(), counts.end(),
                                                           [&](int c) { return c <= n; })) /
                         classes;
      ks = std::max(ks, std::abs(emp - cdf(n)));
    }
    const double dkw = std::sqrt(std::log(2.0 / 1e-3) / (2.0 * classes));
    CAPTURE(classes);
    CHECK(ks < dkw);
    for (int c : counts) CHECK((c >= 2 && c <= 60));
  }
}

TEST_CASE("degenerate toy specs are rejected") {
  auto spec = small_spec(2, 1);
  spec.latents = {std::vector<double>(15, 0.25), std::vector<double>(15, 0.25)};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  auto crowded = small_spec(4, 1);
  crowded.min_latent_separation = 100.0;
  TempDir dir("degenerate");
  CHECK_THROWS_AS(synth_toy_dataset(crowded, 1, dir.path()), InvalidArgument);
  auto one = small_spec(1, 5);
  CHECK_THROWS_AS(one.validate(), InvalidArgument);
}

TEST_CASE("class_stats") {
  SUBCASE("three classes") {
    const auto s = class_stats(counts_manifest({2, 5, 9}));
    CHECK(s.min == 2);
    CHECK(s.median == 5);
    CHECK(s.max == 9);
    CHECK(s.total == 16);
  }
  SUBCASE("uniform") {
    const auto s = class_stats(counts_manifest(std::vector<int>(10, 20)));
    for (double v : {s.min, s.p25, s.median, s.p75, s.max}) CHECK(v == 20);
    CHECK(s.total == 200);
  }
  SUBCASE("percentile row renders the long-tail reference format") {
    const auto s = class_stats(counts_manifest({802, 2, 48, 18, 27}));
    CHECK(format_percentile_row(s) == "2 / 18 / 27 / 48 / 802");
  }
  SUBCASE("percentiles are monotone and counts sum to the records") {
    const auto m = counts_manifest({7, 1, 3, 3, 12, 5, 9});
    const auto s = class_stats(m);
    CHECK(s.min <= s.p25);
    CHECK(s.p25 <= s.median);
    CHECK(s.median <= s.p75);
    CHECK(s.p75 <= s.max);
    CHECK(s.total == static_cast<long>(m.records.size()));
  }
  SUBCASE("empty manifest") { CHECK_THROWS_AS(class_stats(DatasetManifest{}), InvalidArgument); }
}

TEST_CASE("select_ls") {
  CHECK(select_ls(counts_manifest({2, 5, 9}), LsPolicy::above_median) == std::vector<int>{2});
  CHECK(select_ls(counts_manifest({3, 3, 7, 9}), LsPolicy::above_median) == std::vector<int>{2, 3});
  CHECK(select_ls(counts_manifest({4, 4, 4}), LsPolicy::all) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(select_ls(counts_manifest({4, 4, 4}), LsPolicy::above_median), InvalidArgument);
  // Singletons are never eligible.
  CHECK(select_ls(counts_manifest({1, 4, 4}), LsPolicy::all) == std::vector<int>{1, 2});

  // Property: above_median is a subset that excludes everything at or below the median.
  for (int trial = 0; trial < 20; ++trial) {
    numerics::Rng rng(static_cast<std::uint64_t>(trial));
    std::vector<int> counts;
    for (int c = 0; c < 9; ++c) counts.push_back(1 + static_cast<int>(rng.index(30)));
    const auto m = counts_manifest(counts);
    const double med = class_stats(m).median;
    std::vector<int> ls;
    try {
      ls = select_ls(m, LsPolicy::above_median);
    } catch (const InvalidArgument&) {
      continue;
    }
    for (int c : ls) CHECK(counts[static_cast<std::size_t>(c)] > med);
  }
}

TEST_CASE("split_identities") {
  SUBCASE("ten classes at 0.2") {
    const auto r = split_identities(counts_manifest(std::vector<int>(10, 3)), 0.2, 4);
    CHECK(r.train.class_count == 8);
    CHECK(r.heldout.class_count == 2);
    std::set<int> all(r.train_classes.begin(), r.train_classes.end());
    for (int c : r.heldout_classes) CHECK(all.insert(c).second);
    CHECK(all.size() == 10);
  }
  SUBCASE("same seed, same split") {
    const auto m = counts_manifest(std::vector<int>(10, 3));
    CHECK(split_identities(m, 0.3, 8).heldout_classes == split_identities(m, 0.3, 8).heldout_classes);
  }
  SUBCASE("exhaustive seeds on four classes") {
    const auto m = counts_manifest({2, 3, 4, 5});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = split_identities(m, 0.5, seed);
      CHECK(r.train_classes.size() == 2);
      CHECK(r.heldout_classes.size() == 2);
      std::set<int> u(r.train_classes.begin(), r.train_classes.end());
      u.insert(r.heldout_classes.begin(), r.heldout_classes.end());
      CHECK(u.size() == 4);
      CHECK(r.train.records.size() + r.heldout.records.size() == m.records.size());
    }
  }
  SUBCASE("too few classes") {
    CHECK_THROWS_AS(split_identities(counts_manifest({2, 2, 2}), 0.5, 1), InvalidArgument);
    CHECK_THROWS_AS(split_identities(counts_manifest({2, 2, 2, 2}), 1.0, 1), InvalidArgument);
  }
}

TEST_CASE("merge") {
  const auto orig = counts_manifest(std::vector<int>(10, 2));
  DatasetManifest aug;
  aug.class_count = 14;
  for (int c = 10; c < 14; ++c)
    aug.records.push_back({1000u + static_cast<std::uint64_t>(c), c, Provenance::aug, 7u, "y"});
  SUBCASE("class ranges and conservation") {
    const auto mixed = merge(orig, aug);
    CHECK(mixed.class_count == 14);
    CHECK(mixed.records.size() == orig.records.size() + aug.records.size());
    std::set<int> aug_ids;
    for (const auto& r : mixed.records)
      if (r.provenance == Provenance::aug) aug_ids.insert(r.class_id);
    CHECK(aug_ids == std::set<int>{10, 11, 12, 13});
    CHECK(class_stats(mixed).total == class_stats(orig).total + class_stats(aug).total);
    mixed.validate(/*check_files=*/false);
  }
  SUBCASE("remap is a bijection on extra classes") {
    DatasetManifest extra;
    extra.class_count = 50;
    for (int c : {40, 3, 17})
      extra.records.push_back({5000u + static_cast<std::uint64_t>(c), c, Provenance::repro, std::nullopt, "z"});
    const auto mixed = merge(orig, extra);
    std::set<int> targets;
    for (std::size_t i = orig.records.size(); i < mixed.records.size(); ++i)
      targets.insert(mixed.records[i].class_id);
    CHECK(targets == std::set<int>{10, 11, 12});
    CHECK(mixed.records.back().class_id == 11);  // ascending rank of 17 is 1
  }
  SUBCASE("empty extra") { CHECK(merge(orig, DatasetManifest{}) == orig); }
  SUBCASE("sample id collision") {
    DatasetManifest clash;
    clash.class_count = 1;
    clash.records.push_back({0, 0, Provenance::repro, std::nullopt, "q"});
    CHECK_THROWS_AS(merge(orig, clash), Error);
  }
}

TEST_CASE("manifest and images round trip bit-exactly") {
  TempDir dir("roundtrip");
  for (auto format : {ImageFormat::raw, ImageFormat::png}) {
    const auto sub = dir / std::string(to_string(format));
    const auto m = synth_toy_dataset(small_spec(2, 2), 21, sub, format);
    const auto loaded = load_manifest(sub / kManifestFileName);
    CHECK(loaded == m);
    for (const auto& r : m.records) {
      const Tensor img = read_image(m.image_path(r));
      write_image(dir / "again.img", img, format);
      CHECK(read_image(dir / "again.img") == img);
    }
  }
  // Raw blobs keep arbitrary floats exactly.
  Tensor odd({1, 2, 2}, std::vector<float>{0.123456789f, -0.987654321f, 1e-7f, 0.5f});
  write_image(dir / "odd.raw", odd, ImageFormat::raw);
  CHECK(read_image(dir / "odd.raw") == odd);
}

TEST_CASE("manifest validation") {
  TempDir dir("validate");
  auto m = synth_toy_dataset(small_spec(2, 1), 2, dir.path());
  std::filesystem::remove(m.image_path(m.records[0]));
  CHECK_THROWS_AS(load_manifest(dir / kManifestFileName), FormatError);
  DatasetManifest bad = counts_manifest({1});
  bad.records[0].provenance = Provenance::aug;
  CHECK_THROWS_AS(bad.validate(false), FormatError);
}
