#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "gleason/errors.hpp"
#include "gleason/pipeline.hpp"
#include "oracles.hpp"

using namespace gleason;
using namespace gleason::pipeline;
namespace fs = std::filesystem;

namespace {

AnnotationMap map_of(std::size_t w, std::size_t h, std::vector<std::uint8_t> codes, std::string id = "e") {
  AnnotationMap m;
  m.width = w;
  m.height = h;
  m.labels = std::move(codes);
  m.expert_id = std::move(id);
  return m;
}

std::uint8_t vote1(std::vector<std::uint8_t> votes) {
  std::vector<AnnotationMap> maps;
  for (auto v : votes) maps.push_back(map_of(1, 1, {v}));
  return majority_vote(maps).codes[0];
}

std::map<std::string, std::set<std::string>> groups_by_patient(const std::vector<PatchRecord>& records,
                                                              const SplitPlan& plan) {
  std::map<std::string, std::set<std::string>> where;  // patient -> {split/fold tags}
  for (const auto& r : records) {
    std::string tag(split_name(plan.split.at(r.patient_id)));
    if (auto f = plan.fold.find(r.patient_id); f != plan.fold.end()) tag += std::to_string(f->second);
    where[r.patient_id].insert(tag);
  }
  return where;
}

// Sum over folds and classes of (count - target)^2.
double fold_cost(const std::vector<PatchRecord>& records, const std::map<std::string, int>& fold, std::size_t k) {
  std::vector<std::array<double, 4>> n(k, std::array<double, 4>{});
  std::array<double, 4> total{};
  for (const auto& r : records) {
    const auto it = fold.find(r.patient_id);
    if (it == fold.end()) continue;
    n[it->second - 1][static_cast<std::size_t>(r.label)] += 1;
    total[static_cast<std::size_t>(r.label)] += 1;
  }
  double cost = 0.0;
  for (const auto& f : n)
    for (std::size_t c = 0; c < 4; ++c) cost += (f[c] - total[c] / k) * (f[c] - total[c] / k);
  return cost;
}

}  // namespace

TEST_CASE("majority vote examples") {
  CHECK(vote1({3, 3, 4}) == kGrade3);
  CHECK(vote1({3, 4}) == kAmbiguous);
  CHECK(vote1({5, 5, 5}) == kGrade5);
  CHECK(vote1({0, 0, 1}) == kBackground);
  CHECK(vote1({1, 3, 4}) == kAmbiguous);
  CHECK(vote1({4}) == kGrade4);

  std::vector<AnnotationMap> bad{map_of(2, 1, {1, 1}), map_of(1, 2, {1, 1})};
  CHECK_THROWS_AS(majority_vote(bad), InputError);
  CHECK_THROWS_AS(majority_vote(std::vector<AnnotationMap>{}), InputError);
}

TEST_CASE("majority vote equals explicit counting on random maps") {
  std::mt19937_64 rng(1);
  const std::uint8_t codes[5] = {0, 1, 3, 4, 5};
  std::uniform_int_distribution<int> pick(0, 4);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<std::uint8_t>> raw(3, std::vector<std::uint8_t>(64 * 64));
    std::vector<AnnotationMap> maps;
    for (auto& m : raw) {
      for (auto& v : m) v = codes[pick(rng)];
      maps.push_back(map_of(64, 64, m));
    }
    CHECK(majority_vote(maps).codes == oracle::vote(raw));
  }
}

TEST_CASE("annotation maps reject unknown codes") {
  Image8 img(3, 2, 1);
  img.at(1, 1) = 2;
  CHECK_THROWS_AS(AnnotationMap::from_image(img, "expert_1"), InputError);
  img.at(1, 1) = 5;
  CHECK(AnnotationMap::from_image(img, "expert_1").at(1, 1) == 5);
}

TEST_CASE("grid enumeration") {
  CHECK(enumerate_grid(5120, 5120).size() == 361);
  CHECK(enumerate_grid(512, 512) == std::vector<GridPos>{{0, 0}});
  CHECK(enumerate_grid(768, 512) == std::vector<GridPos>{{0, 0}, {256, 0}});
  CHECK(enumerate_grid(511, 4096).empty());
  CHECK(enumerate_grid(1000, 600).size() == 2);  // x in {0, 256}, y = 0
  for (const auto& p : enumerate_grid(3000, 2000)) {
    CHECK(p.x % 256 == 0);
    CHECK(p.x + 512 <= 3000);
    CHECK(p.y + 512 <= 2000);
  }
}

TEST_CASE("core labeling") {
  auto uniform = fixture::rect_map(512, 512, kGrade3, 0, 0, 0, 0, kGrade3);
  CHECK(assign_label(uniform, 0, 0) == ClassLabel::g3);

  auto one_bg = uniform;
  one_bg.codes[200 * 512 + 300] = kBackground;
  CHECK_FALSE(assign_label(one_bg, 0, 0).has_value());

  auto mixed = fixture::rect_map(512, 512, kGrade3, 256, 0, 512, 512, kGrade4);
  CHECK_FALSE(assign_label(mixed, 0, 0).has_value());

  auto ambiguous = uniform;
  ambiguous.codes[256 * 512 + 256] = kAmbiguous;
  CHECK_FALSE(assign_label(ambiguous, 0, 0).has_value());

  // the core spans [131, 381): pixels just outside it do not matter
  auto ring = fixture::rect_map(512, 512, kBackground, 131, 131, 381, 381, kGrade5);
  CHECK(assign_label(ring, 0, 0) == ClassLabel::g5);
  auto short_by_one = fixture::rect_map(512, 512, kBackground, 132, 131, 381, 381, kGrade5);
  CHECK_FALSE(assign_label(short_by_one, 0, 0).has_value());

  auto benign = fixture::rect_map(512, 512, kBenign, 0, 0, 0, 0, kBenign);
  CHECK(assign_label(benign, 0, 0) == ClassLabel::benign);
}

TEST_CASE("extraction on hand-computed geometry") {
  SUBCASE("two grade halves") {
    // x < 512 grade 3, x >= 512 grade 4; columns 0 and 512 keep, column 256 straddles
    const auto m = fixture::rect_map(1024, 1024, kGrade3, 512, 0, 1024, 1024, kGrade4);
    const auto r = extract_patches(m, "img", "pat");
    CHECK(r.grid_size == 9);
    CHECK(r.kept.size() == 6);
    CHECK(r.discarded == 3);
    std::size_t g3 = 0, g4 = 0;
    for (const auto& p : r.kept) {
      g3 += p.label == ClassLabel::g3;
      g4 += p.label == ClassLabel::g4;
      CHECK(p.x != 256);
    }
    CHECK(g3 == 3);
    CHECK(g4 == 3);
  }
  SUBCASE("5120 square with one grade 3 region") {
    // region [1000, 3000)^2: core [p+131, p+381) fits for p = 1024..2560, 7 per axis
    const auto m = fixture::rect_map(5120, 5120, kBackground, 1000, 1000, 3000, 3000, kGrade3);
    const auto r = extract_patches(m, "big", "pat");
    CHECK(r.grid_size == 361);
    CHECK(r.kept.size() == 49);
    CHECK(r.discarded == 312);
    for (const auto& p : r.kept) {
      CHECK(p.label == ClassLabel::g3);
      CHECK(assign_label(m, p.x, p.y) == p.label);
      CHECK(p.x >= 1024);
      CHECK(p.x <= 2560);
    }
  }
  SUBCASE("image smaller than a patch") {
    const auto m = fixture::rect_map(300, 300, kGrade3, 0, 0, 0, 0, kGrade3);
    const auto r = extract_patches(m, "small", "pat");
    CHECK(r.grid_size == 0);
    CHECK(r.kept.empty());
  }
  SUBCASE("smaller geometry: patch 64, stride 32, core 30") {
    // offset 17; grade 4 block [40, 120)^2 in a 160 square
    const auto m = fixture::rect_map(160, 160, kBackground, 40, 40, 120, 120, kGrade4);
    const auto r = extract_patches(m, "s", "p", 64, 32, 30);
    // p + 17 >= 40 and p + 47 <= 120 -> p in {32, 64}
    CHECK(r.grid_size == 16);
    CHECK(r.kept.size() == 4);
    CHECK(r.kept.size() + r.discarded == r.grid_size);
  }
}

TEST_CASE("split by patient") {
  SUBCASE("ten equal patients") {
    const auto recs = fixture::uniform_cohort(10, 8);
    const auto plan = split_by_patient(recs, 0.2, 0.1, 3);
    std::map<Split, int> n;
    for (const auto& [p, s] : plan.split) n[s]++;
    CHECK(n[Split::test] == 2);
    CHECK(n[Split::val] == 1);
    CHECK(n[Split::train] == 7);
  }
  SUBCASE("determinism") {
    const auto recs = fixture::cohort(25, 4);
    CHECK(split_by_patient(recs, 0.2, 0.1, 11).split == split_by_patient(recs, 0.2, 0.1, 11).split);
    CHECK(split_by_patient(recs, 0.2, 0.1, 11).split != split_by_patient(recs, 0.2, 0.1, 12).split);
  }
  SUBCASE("coverage targets are met") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto recs = fixture::cohort(30, seed);
      const auto plan = split_by_patient(recs, 0.2, 0.1, seed);
      apply_plan(recs, plan);
      std::size_t test = 0, val = 0;
      for (const auto& r : recs) {
        test += r.split == Split::test;
        val += r.split == Split::val;
      }
      CHECK(static_cast<double>(test) >= 0.2 * static_cast<double>(recs.size()));
      CHECK(static_cast<double>(val) >= 0.1 * static_cast<double>(recs.size() - test));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(split_by_patient(fixture::uniform_cohort(1, 5), 0.2, 0.1, 0), InputError);
    CHECK_THROWS_AS(split_by_patient(fixture::uniform_cohort(4, 5), 1.5, 0.1, 0), ConfigError);
  }
  SUBCASE("two patients still leave one for training") {
    const auto plan = split_by_patient(fixture::uniform_cohort(2, 5), 0.2, 0.1, 0);
    std::map<Split, int> n;
    for (const auto& [p, s] : plan.split) n[s]++;
    CHECK(n[Split::train] >= 1);
  }
}

TEST_CASE("no patient leakage over random seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    const auto recs = fixture::cohort(12 + seed % 30, seed);
    for (const auto& plan : {split_by_patient(recs, 0.2, 0.1, seed), assign_folds(recs, 4, seed, 0.2)}) {
      for (const auto& [patient, tags] : groups_by_patient(recs, plan)) CHECK(tags.size() == 1);
    }
  }
}

TEST_CASE("fold assignment") {
  SUBCASE("eight uniform patients give two per fold") {
    const auto plan = assign_folds(fixture::uniform_cohort(8, 12), 4, 5);
    std::map<int, int> per_fold;
    for (const auto& [p, f] : plan.fold) per_fold[f]++;
    CHECK(per_fold == std::map<int, int>{{1, 2}, {2, 2}, {3, 2}, {4, 2}});
  }
  SUBCASE("every fold is populated even with few patients") {
    const auto plan = assign_folds(fixture::cohort(4, 9, 1, 100), 4, 2);
    std::set<int> folds;
    for (const auto& [p, f] : plan.fold) folds.insert(f);
    CHECK(folds.size() == 4);
  }
  SUBCASE("too few patients") {
    CHECK_THROWS_AS(assign_folds(fixture::uniform_cohort(3, 4), 4, 0), InputError);
  }
  SUBCASE("held-out test patients") {
    const auto recs = fixture::cohort(40, 6);
    const auto plan = assign_folds(recs, 4, 6, 0.2);
    for (const auto& [p, s] : plan.split) CHECK((s == Split::test) != plan.fold.contains(p));
  }
  SUBCASE("class proportions within 20% on the 40-patient fixture") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CAPTURE(seed);
      const auto recs = fixture::cohort(40, 1000 + seed);
      const auto plan = assign_folds(recs, 4, seed);
      std::array<double, 4> global{};
      std::vector<std::array<double, 4>> fold(4, std::array<double, 4>{});
      std::vector<double> size(4, 0.0);
      for (const auto& r : recs) {
        const int f = plan.fold.at(r.patient_id) - 1;
        fold[f][static_cast<std::size_t>(r.label)] += 1;
        size[f] += 1;
        global[static_cast<std::size_t>(r.label)] += 1;
      }
      for (std::size_t f = 0; f < 4; ++f) {
        for (std::size_t c = 0; c < 4; ++c) {
          const double g = global[c] / static_cast<double>(recs.size());
          CHECK(std::abs(fold[f][c] / size[f] - g) <= 0.2 * g);
        }
      }
    }
  }
  SUBCASE("greedy is close to the exhaustive optimum on tiny cohorts") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CAPTURE(seed);
      const auto recs = fixture::cohort(7, 50 + seed, 3, 12);
      const std::size_t k = 3;
      const auto plan = assign_folds(recs, k, seed);
      std::vector<std::string> ids;
      for (const auto& [p, f] : plan.fold) ids.push_back(p);
      double best = 1e300;
      std::vector<int> code(ids.size(), 0);
      std::size_t combos = 1;
      for (std::size_t i = 0; i < ids.size(); ++i) combos *= k;
      for (std::size_t c = 0; c < combos; ++c) {
        std::size_t v = c;
        std::map<std::string, int> fold;
        std::set<int> used;
        for (const auto& id : ids) {
          fold[id] = static_cast<int>(v % k) + 1;
          used.insert(fold[id]);
          v /= k;
        }
        if (used.size() == k) best = std::min(best, fold_cost(recs, fold, k));
      }
      const double greedy = fold_cost(recs, plan.fold, k);
      CHECK(greedy >= best - 1e-9);
      CHECK(greedy <= 2.0 * best + 20.0);
    }
  }
}

TEST_CASE("manifest round trip and determinism") {
  const fs::path dir = fs::temp_directory_path() / "gleason_test_pipeline";
  fs::create_directories(dir);
  auto recs = fixture::cohort(6, 8);
  apply_plan(recs, assign_folds(recs, 2, 1));
  write_manifest((dir / "a.csv").string(), recs);
  write_manifest((dir / "b.csv").string(), recs);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(read_manifest((dir / "a.csv").string()) == recs);

  {
    std::ofstream os(dir / "sicap.csv");
    os << "patch_id,patient_id,image_id,x,y,label\n16B0001_0_0,16B0001,16B0001,0,0,g4\r\n";
  }
  const auto sicap = read_manifest((dir / "sicap.csv").string());
  REQUIRE(sicap.size() == 1);
  CHECK(sicap[0].label == ClassLabel::g4);
  CHECK(sicap[0].split == Split::none);

  {
    std::ofstream os(dir / "bad.csv");
    os << kManifestHeader << "\nok_0_0,p,i,0,0,g3,train,\nbad_0_0,p,i,0,0,g7,train,\n";
  }
  try {
    read_manifest((dir / "bad.csv").string());
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    CHECK(std::string(e.what()).find("g7") != std::string::npos);
  }

  {
    std::ofstream os(dir / "patients.csv");
    os << "image_id,patient_id\nslide1,pA\nslide2,pA\n";
  }
  const auto pm = read_patient_map((dir / "patients.csv").string());
  CHECK(pm.at("slide2") == "pA");
  fs::remove_all(dir);
}

TEST_CASE("records sort by image, row, column") {
  std::vector<PatchRecord> recs(3);
  recs[0].image_id = "b";
  recs[1].image_id = "a";
  recs[1].y = 256;
  recs[2].image_id = "a";
  recs[2].x = 512;
  sort_records(recs);
  CHECK(recs[0].image_id == "a");
  CHECK(recs[0].x == 512);
  CHECK(recs[1].y == 256);
  CHECK(recs[2].image_id == "b");
}
