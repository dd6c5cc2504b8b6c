#pragma once

// Patch dataset engineering: multi-expert consensus, grid patch extraction
// with central-core labeling, and patient-grouped splitting.
//
// Annotation codes: 0 background, 1 benign, 3/4/5 Gleason grade. Grade codes
// equal the Gleason pattern number.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gleason/image.hpp"
#include "gleason/medmamba.hpp"

namespace gleason::pipeline {

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kBenign = 1;
inline constexpr std::uint8_t kGrade3 = 3;
inline constexpr std::uint8_t kGrade4 = 4;
inline constexpr std::uint8_t kGrade5 = 5;
inline constexpr std::uint8_t kAmbiguous = 255;  // consensus only

inline constexpr std::size_t kDefaultPatch = 512;
inline constexpr std::size_t kDefaultStride = 256;
inline constexpr std::size_t kDefaultCore = 250;

bool is_annotation_code(std::uint8_t code);
// 1/3/4/5 -> class label; background and AMBIGUOUS have none.
std::optional<ClassLabel> code_to_label(std::uint8_t code);

struct AnnotationMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;  // row-major
  std::string expert_id;

  // Throws InputError when a pixel holds a code outside {0,1,3,4,5}.
  static AnnotationMap from_image(const Image8& gray, std::string expert_id);
  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }
};

struct ConsensusMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> codes;  // {0,1,3,4,5,kAmbiguous}

  std::uint8_t at(std::size_t x, std::size_t y) const { return codes[y * width + x]; }
};

// Per pixel, the code held by the most experts; ties for the top count are
// AMBIGUOUS. Throws InputError on an empty list or mismatched dimensions.
ConsensusMap majority_vote(std::span<const AnnotationMap> maps);

struct GridPos {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const GridPos&) const = default;
};

// Top-left corners on the stride lattice whose patch fits in the image.
// Empty (with a warning) when the image is smaller than one patch.
std::vector<GridPos> enumerate_grid(std::size_t width, std::size_t height, std::size_t patch = kDefaultPatch,
                                    std::size_t stride = kDefaultStride);

// Label of the patch at (x, y) from its centred core x core region, offset
// (patch - core) / 2 from the corner: the common label when every core pixel
// is non-background, non-AMBIGUOUS and identical; nullopt (discard) otherwise.
std::optional<ClassLabel> assign_label(const ConsensusMap& consensus, std::size_t x, std::size_t y,
                                       std::size_t patch = kDefaultPatch, std::size_t core = kDefaultCore);

enum class Split { none, train, val, test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view token);

struct PatchRecord {
  std::string patch_id;
  std::string patient_id;
  std::string image_id;
  std::size_t x = 0;
  std::size_t y = 0;
  ClassLabel label = ClassLabel::benign;
  Split split = Split::none;
  std::optional<int> fold;  // 1..k in fold mode

  bool operator==(const PatchRecord&) const = default;
};

std::string make_patch_id(const std::string& image_id, std::size_t x, std::size_t y);

struct ExtractionResult {
  std::vector<PatchRecord> kept;  // sorted by (y, x)
  std::size_t grid_size = 0;
  std::size_t discarded = 0;
};

ExtractionResult extract_patches(const ConsensusMap& consensus, const std::string& image_id,
                                 const std::string& patient_id, std::size_t patch = kDefaultPatch,
                                 std::size_t stride = kDefaultStride, std::size_t core = kDefaultCore);

struct SplitPlan {
  std::map<std::string, Split> split;  // patient -> split
  std::map<std::string, int> fold;     // patient -> fold (fold mode only)
  double test_frac = 0.0;
  double val_frac = 0.0;
  std::size_t folds = 0;
  std::uint64_t seed = 0;
};

// Patients are shuffled by `seed`; they fill the test split until it holds at
// least test_frac of all patches, then validation until it holds at least
// val_frac of the remaining patches; the rest train. At least one patient is
// always left for training. Throws InputError with fewer than two patients.
SplitPlan split_by_patient(std::span<const PatchRecord> records, double test_frac, double val_frac,
                           std::uint64_t seed);

// Optional held-out test patients (test_frac, as above), then the remaining
// patients sorted by patch count (descending, seeded tie order) are placed one
// by one into the fold whose per-class counts move least away from the
// per-fold class target. A local search over single moves and pairwise swaps
// then lowers the squared relative deviation of each fold's class proportions
// from the pooled ones. Throws InputError when fewer than k patients remain.
SplitPlan assign_folds(std::span<const PatchRecord> records, std::size_t k, std::uint64_t seed,
                       double test_frac = 0.0);

// Fills split/fold of every record from the plan.
void apply_plan(std::vector<PatchRecord>& records, const SplitPlan& plan);

// Class support per split (rows: none/train/val/test, columns: class order).
std::map<Split, std::array<std::size_t, kNumClasses>> split_supports(std::span<const PatchRecord> records);

// ---- files -------------------------------------------------------------------

inline constexpr std::string_view kManifestHeader = "patch_id,patient_id,image_id,x,y,label,split,fold";

void write_manifest(const std::string& path, std::span<const PatchRecord> records);
// Accepts the full header or a labeled-patch list with only the first six
// columns (split/fold then start empty). Throws InputError with the row number
// on malformed rows or unknown labels.
std::vector<PatchRecord> read_manifest(const std::string& path);

// image_id -> patient_id from a CSV with header image_id,patient_id.
std::map<std::string, std::string> read_patient_map(const std::string& path);

// Orders records by (image_id, y, x).
void sort_records(std::vector<PatchRecord>& records);

}  // namespace gleason::pipeline
