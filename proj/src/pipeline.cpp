#include "gleason/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "gleason/csv.hpp"
#include "gleason/errors.hpp"

namespace gleason::pipeline {

bool is_annotation_code(std::uint8_t code) {
  return code == kBackground || code == kBenign || code == kGrade3 || code == kGrade4 || code == kGrade5;
}

std::optional<ClassLabel> code_to_label(std::uint8_t code) {
  switch (code) {
    case kBenign: return ClassLabel::benign;
    case kGrade3: return ClassLabel::g3;
    case kGrade4: return ClassLabel::g4;
    case kGrade5: return ClassLabel::g5;
    default: return std::nullopt;
  }
}

AnnotationMap AnnotationMap::from_image(const Image8& gray, std::string expert_id) {
  if (gray.channels != 1) throw InputError("annotation map must be single-channel");
  AnnotationMap m;
  m.width = gray.width;
  m.height = gray.height;
  m.labels = gray.pixels;
  m.expert_id = std::move(expert_id);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    if (!is_annotation_code(m.labels[i])) {
      throw InputError("annotation " + m.expert_id + ": invalid code " + std::to_string(m.labels[i]) +
                       " at pixel (" + std::to_string(i % m.width) + ", " + std::to_string(i / m.width) + ")");
    }
  }
  return m;
}

ConsensusMap majority_vote(std::span<const AnnotationMap> maps) {
  if (maps.empty()) throw InputError("majority_vote: no annotation maps");
  const std::size_t w = maps[0].width, h = maps[0].height;
  for (const auto& m : maps) {
    if (m.width != w || m.height != h || m.labels.size() != w * h) {
      throw InputError("majority_vote: expert " + m.expert_id + " map is " + std::to_string(m.width) + "x" +
                       std::to_string(m.height) + ", expected " + std::to_string(w) + "x" + std::to_string(h));
    }
  }
  ConsensusMap out{w, h, std::vector<std::uint8_t>(w * h)};
  const std::int64_t n = static_cast<std::int64_t>(w * h);
#pragma omp parallel for schedule(static) if (n > (1 << 16))
  for (std::int64_t i = 0; i < n; ++i) {
    std::array<std::uint8_t, 6> votes{};  // indexed by code, 2 unused
    for (const auto& m : maps) ++votes[m.labels[static_cast<std::size_t>(i)]];
    std::uint8_t best = 0, top = 0;
    bool tie = false;
    for (std::uint8_t c = 0; c < votes.size(); ++c) {
      if (votes[c] > top) {
        top = votes[c];
        best = c;
        tie = false;
      } else if (votes[c] == top && top > 0) {
        tie = true;
      }
    }
    out.codes[static_cast<std::size_t>(i)] = tie ? kAmbiguous : best;
  }
  return out;
}

std::vector<GridPos> enumerate_grid(std::size_t width, std::size_t height, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ConfigError("patch and stride must be positive");
  std::vector<GridPos> grid;
  if (width < patch || height < patch) {
    spdlog::warn("image {}x{} is smaller than patch size {}; no patches", width, height, patch);
    return grid;
  }
  for (std::size_t y = 0; y + patch <= height; y += stride)
    for (std::size_t x = 0; x + patch <= width; x += stride) grid.push_back({x, y});
  return grid;
}

std::optional<ClassLabel> assign_label(const ConsensusMap& consensus, std::size_t x, std::size_t y, std::size_t patch,
                                       std::size_t core) {
  if (core == 0 || core > patch) throw ConfigError("core size must be in [1, patch]");
  if (x + patch > consensus.width || y + patch > consensus.height) {
    throw InputError("patch at (" + std::to_string(x) + ", " + std::to_string(y) + ") exceeds the consensus map");
  }
  const std::size_t off = (patch - core) / 2;
  const std::uint8_t first = consensus.at(x + off, y + off);
  const auto label = code_to_label(first);
  if (!label) return std::nullopt;
  for (std::size_t yy = y + off; yy < y + off + core; ++yy) {
    const std::uint8_t* row = &consensus.codes[yy * consensus.width + x + off];
    if (std::any_of(row, row + core, [first](std::uint8_t c) { return c != first; })) return std::nullopt;
  }
  return label;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "";
}

std::optional<Split> parse_split(std::string_view token) {
  if (token.empty()) return Split::none;
  if (token == "train") return Split::train;
  if (token == "val") return Split::val;
  if (token == "test") return Split::test;
  return std::nullopt;
}

std::string make_patch_id(const std::string& image_id, std::size_t x, std::size_t y) {
  return image_id + "_" + std::to_string(x) + "_" + std::to_string(y);
}

ExtractionResult extract_patches(const ConsensusMap& consensus, const std::string& image_id,
                                 const std::string& patient_id, std::size_t patch, std::size_t stride,
                                 std::size_t core) {
  ExtractionResult r;
  const auto grid = enumerate_grid(consensus.width, consensus.height, patch, stride);
  r.grid_size = grid.size();
  for (const auto& p : grid) {
    const auto label = assign_label(consensus, p.x, p.y, patch, core);
    if (!label) {
      ++r.discarded;
      continue;
    }
    PatchRecord rec;
    rec.patch_id = make_patch_id(image_id, p.x, p.y);
    rec.patient_id = patient_id;
    rec.image_id = image_id;
    rec.x = p.x;
    rec.y = p.y;
    rec.label = *label;
    r.kept.push_back(std::move(rec));
  }
  return r;
}

namespace {

struct PatientStats {
  std::vector<std::string> ids;  // sorted
  std::map<std::string, std::array<std::size_t, kNumClasses>> counts;
  std::size_t total = 0;

  std::size_t count(const std::string& p) const {
    const auto& c = counts.at(p);
    return std::accumulate(c.begin(), c.end(), std::size_t{0});
  }
};

PatientStats gather(std::span<const PatchRecord> records) {
  PatientStats s;
  for (const auto& r : records) {
    if (r.patient_id.empty()) throw InputError("patch " + r.patch_id + " has no patient_id");
    ++s.counts[r.patient_id][static_cast<std::size_t>(r.label)];
    ++s.total;
  }
  for (const auto& [p, _] : s.counts) s.ids.push_back(p);
  return s;
}

// Takes patients from `order` starting at `idx` until `target` patches are
// covered, keeping at least `reserve` patients behind.
std::size_t take_until(const PatientStats& s, const std::vector<std::string>& order, std::size_t idx, double target,
                       std::size_t reserve, std::map<std::string, Split>& plan, Split split) {
  std::size_t covered = 0;
  while (static_cast<double>(covered) < target - 1e-9 && idx + reserve < order.size()) {
    plan[order[idx]] = split;
    covered += s.count(order[idx]);
    ++idx;
  }
  return idx;
}

// Sum over folds and classes of the squared relative deviation of the fold's
// class proportion from the pooled one.
double proportion_cost(const std::vector<std::array<double, kNumClasses>>& load,
                       const std::array<double, kNumClasses>& global) {
  double cost = 0.0;
  for (const auto& f : load) {
    const double size = std::accumulate(f.begin(), f.end(), 0.0);
    if (size == 0.0) return std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (global[c] == 0.0) continue;
      const double rel = (f[c] / size - global[c]) / global[c];
      cost += rel * rel;
    }
  }
  return cost;
}

// Local search after the greedy pass: apply the best single move or pairwise
// swap until neither lowers proportion_cost. Folds never become empty.
void refine_folds(const PatientStats& s, const std::vector<std::string>& ids, std::size_t k,
                  std::map<std::string, int>& fold) {
  std::vector<std::array<double, kNumClasses>> counts;
  std::vector<std::size_t> at;
  std::vector<std::array<double, kNumClasses>> load(k, std::array<double, kNumClasses>{});
  std::array<double, kNumClasses> global{};
  double total = 0.0;
  for (const auto& p : ids) {
    std::array<double, kNumClasses> c{};
    for (std::size_t j = 0; j < kNumClasses; ++j) c[j] = static_cast<double>(s.counts.at(p)[j]);
    counts.push_back(c);
    at.push_back(static_cast<std::size_t>(fold.at(p) - 1));
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      load[at.back()][j] += c[j];
      global[j] += c[j];
      total += c[j];
    }
  }
  if (total == 0.0) return;
  for (double& g : global) g /= total;

  auto shift = [&](std::size_t i, std::size_t to, double sign) {
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      load[at[i]][j] -= sign * counts[i][j];
      load[to][j] += sign * counts[i][j];
    }
  };
  std::vector<std::size_t> members(k, 0);
  for (auto f : at) ++members[f];

  double cost = proportion_cost(load, global);
  for (std::size_t iter = 0; iter < 100 * ids.size(); ++iter) {
    double best = cost - 1e-12;
    std::size_t bi = ids.size(), bj = ids.size(), bf = k;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t from = at[i];
      if (members[from] > 1) {
        for (std::size_t f = 0; f < k; ++f) {
          if (f == from) continue;
          shift(i, f, 1.0);
          const double c = proportion_cost(load, global);
          shift(i, f, -1.0);
          if (c < best) std::tie(best, bi, bj, bf) = std::make_tuple(c, i, ids.size(), f);
        }
      }
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const std::size_t fj = at[j];
        if (fj == from) continue;
        shift(i, fj, 1.0);
        shift(j, from, 1.0);
        const double c = proportion_cost(load, global);
        shift(j, from, -1.0);
        shift(i, fj, -1.0);
        if (c < best) std::tie(best, bi, bj, bf) = std::make_tuple(c, i, j, fj);
      }
    }
    if (bi == ids.size()) break;
    if (bj == ids.size()) {
      shift(bi, bf, 1.0);
      --members[at[bi]];
      ++members[bf];
      at[bi] = bf;
    } else {
      const std::size_t from = at[bi];
      shift(bi, bf, 1.0);
      shift(bj, from, 1.0);
      at[bi] = bf;
      at[bj] = from;
    }
    cost = best;
  }
  for (std::size_t i = 0; i < ids.size(); ++i) fold[ids[i]] = static_cast<int>(at[i]) + 1;
}

void check_frac(double f, const char* name) {
  if (!(f >= 0.0 && f < 1.0)) throw ConfigError(std::string(name) + " must be in [0, 1)");
}

}  // namespace

SplitPlan split_by_patient(std::span<const PatchRecord> records, double test_frac, double val_frac,
                           std::uint64_t seed) {
  check_frac(test_frac, "test_frac");
  check_frac(val_frac, "val_frac");
  const PatientStats s = gather(records);
  if (s.ids.size() < 2) {
    throw InputError("cannot split " + std::to_string(s.ids.size()) +
                     " patient(s) into disjoint subsets; at least 2 are required");
  }
  std::vector<std::string> order = s.ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitPlan plan;
  plan.test_frac = test_frac;
  plan.val_frac = val_frac;
  plan.seed = seed;
  std::size_t idx = take_until(s, order, 0, test_frac * static_cast<double>(s.total), 1, plan.split, Split::test);
  std::size_t remaining = 0;
  for (std::size_t i = idx; i < order.size(); ++i) remaining += s.count(order[i]);
  idx = take_until(s, order, idx, val_frac * static_cast<double>(remaining), 1, plan.split, Split::val);
  for (; idx < order.size(); ++idx) plan.split[order[idx]] = Split::train;
  return plan;
}

SplitPlan assign_folds(std::span<const PatchRecord> records, std::size_t k, std::uint64_t seed, double test_frac) {
  if (k == 0) throw ConfigError("folds must be positive");
  check_frac(test_frac, "test_frac");
  const PatientStats s = gather(records);
  if (s.ids.size() < k) {
    throw InputError("cannot build " + std::to_string(k) + " folds from " + std::to_string(s.ids.size()) +
                     " patient(s)");
  }
  std::vector<std::string> order = s.ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitPlan plan;
  plan.test_frac = test_frac;
  plan.folds = k;
  plan.seed = seed;
  const std::size_t start =
      take_until(s, order, 0, test_frac * static_cast<double>(s.total), k, plan.split, Split::test);

  std::vector<std::string> rest(order.begin() + static_cast<std::ptrdiff_t>(start), order.end());
  std::stable_sort(rest.begin(), rest.end(),
                   [&](const std::string& a, const std::string& b) { return s.count(a) > s.count(b); });

  std::array<double, kNumClasses> target{};
  for (const auto& p : rest)
    for (std::size_t c = 0; c < kNumClasses; ++c) target[c] += static_cast<double>(s.counts.at(p)[c]);
  for (double& t : target) t /= static_cast<double>(k);

  std::vector<std::array<double, kNumClasses>> load(k, std::array<double, kNumClasses>{});
  std::vector<std::size_t> members(k, 0);
  std::size_t empty_folds = k;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    const auto& pc = s.counts.at(rest[i]);
    const bool force_empty = rest.size() - i <= empty_folds;
    std::size_t best = k;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < k; ++f) {
      if (force_empty && members[f] > 0) continue;
      double cost = 0.0;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double before = load[f][c] - target[c];
        const double after = before + static_cast<double>(pc[c]);
        cost += after * after - before * before;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = f;
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) load[best][c] += static_cast<double>(pc[c]);
    if (members[best]++ == 0) --empty_folds;
    plan.split[rest[i]] = Split::train;
    plan.fold[rest[i]] = static_cast<int>(best) + 1;
  }
  refine_folds(s, rest, k, plan.fold);
  return plan;
}

void apply_plan(std::vector<PatchRecord>& records, const SplitPlan& plan) {
  for (auto& r : records) {
    const auto it = plan.split.find(r.patient_id);
    if (it == plan.split.end()) throw InputError("patient " + r.patient_id + " missing from split plan");
    r.split = it->second;
    const auto f = plan.fold.find(r.patient_id);
    r.fold = f == plan.fold.end() ? std::nullopt : std::optional<int>(f->second);
  }
}

std::map<Split, std::array<std::size_t, kNumClasses>> split_supports(std::span<const PatchRecord> records) {
  std::map<Split, std::array<std::size_t, kNumClasses>> out;
  for (const auto& r : records) ++out[r.split][static_cast<std::size_t>(r.label)];
  return out;
}

void write_manifest(const std::string& path, std::span<const PatchRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write " + path);
  os << kManifestHeader << '\n';
  for (const auto& r : records) {
    os << r.patch_id << ',' << r.patient_id << ',' << r.image_id << ',' << r.x << ',' << r.y << ','
       << label_name(r.label) << ',' << split_name(r.split) << ',';
    if (r.fold) os << *r.fold;
    os << '\n';
  }
  if (!os) throw InputError("failed writing " + path);
}

namespace {

std::size_t parse_coord(const std::string& s, const std::string& path, std::size_t line, const char* what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw InputError(path + ":" + std::to_string(line) + ": invalid " + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<PatchRecord> read_manifest(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::vector<std::string> full = csv::split_line(kManifestHeader);
  const bool has_split = t.header == full;
  const bool labeled_only = t.header.size() == 6 && std::equal(t.header.begin(), t.header.end(), full.begin());
  if (!has_split && !labeled_only) {
    throw InputError(path + ": unexpected header; expected '" + std::string(kManifestHeader) + "'");
  }
  std::vector<PatchRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    const std::string where = path + ":" + std::to_string(line);
    if (row.size() != t.header.size()) {
      throw InputError(where + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(row.size()));
    }
    PatchRecord r;
    r.patch_id = row[0];
    r.patient_id = row[1];
    r.image_id = row[2];
    if (r.patch_id.empty()) throw InputError(where + ": empty patch_id");
    r.x = parse_coord(row[3], path, line, "x");
    r.y = parse_coord(row[4], path, line, "y");
    const auto label = parse_label(row[5]);
    if (!label) throw InputError(where + ": unknown label '" + row[5] + "'");
    r.label = *label;
    if (has_split) {
      const auto split = parse_split(row[6]);
      if (!split) throw InputError(where + ": unknown split '" + row[6] + "'");
      r.split = *split;
      if (!row[7].empty()) r.fold = static_cast<int>(parse_coord(row[7], path, line, "fold"));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, std::string> read_patient_map(const std::string& path) {
  const csv::Table t = csv::read(path);
  const std::size_t ci = csv::column(t, "image_id", path);
  const std::size_t cp = csv::column(t, "patient_id", path);
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    if (row.size() <= std::max(ci, cp) || row[ci].empty() || row[cp].empty()) {
      throw InputError(path + ":" + std::to_string(t.line_numbers[i]) + ": malformed row");
    }
    out[row[ci]] = row[cp];
  }
  return out;
}

void sort_records(std::vector<PatchRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const PatchRecord& a, const PatchRecord& b) {
    return std::tie(a.image_id, a.y, a.x) < std::tie(b.image_id, b.y, b.x);
  });
}

}  // namespace gleason::pipeline
