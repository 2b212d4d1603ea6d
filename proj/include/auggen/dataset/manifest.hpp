#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "auggen/dataset/image_io.hpp"

namespace auggen::dataset {

enum class Provenance { orig, repro, aug };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view s);

struct ManifestRecord {
  std::uint64_t sample_id = 0;
  int class_id = 0;
  Provenance provenance = Provenance::orig;
  std::optional<std::uint64_t> recipe_id;  // set for aug records
  std::string path;                        // relative to DatasetManifest::root

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

// Index of a labeled image collection. Records reference image files under
// `root`. Immutable once built; split/merge produce new manifests.
//
// Text form, one record per tab-separated line after '#' header lines:
//   sample_id  class_id  provenance  recipe_id|-  relative_path
// Header lines: "# auggen-manifest 1", "# class_count N", "# source_seed S",
// optional "# latent <class> v0 v1 ..." (ground-truth toy identity latents)
// and "# note <text>".
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;
  int class_count = 0;
  std::uint64_t source_seed = 0;
  // Ground-truth latent per class when the data came from the toy renderer.
  std::vector<std::vector<double>> class_latents;
  std::vector<std::string> notes;

  std::filesystem::path image_path(const ManifestRecord& r) const { return root / r.path; }
  std::vector<int> class_ids() const;  // sorted distinct ids present
  // Checks id uniqueness, class ranges, recipe presence on aug records and,
  // when check_files is set, that every image exists.
  void validate(bool check_files = true) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr const char* kManifestFileName = "manifest.tsv";

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file);
// Record paths are resolved against the manifest file's directory.
DatasetManifest load_manifest(const std::filesystem::path& file);

std::string manifest_to_text(const DatasetManifest& manifest);

// Images loaded into memory, aligned with the manifest record order.
struct LabeledImages {
  std::vector<Tensor> images;  // each [C, H, W]
  std::vector<int> labels;
  std::size_t size() const { return images.size(); }
};

LabeledImages load_images(const DatasetManifest& manifest);

// Class-disjoint split. Both sides are re-indexed to contiguous class ids in
// ascending order of the original ids; latents follow their classes.
struct SplitResult {
  DatasetManifest train;
  DatasetManifest heldout;
  std::vector<int> train_classes;    // original ids, ascending
  std::vector<int> heldout_classes;  // original ids, ascending
};
SplitResult split_identities(const DatasetManifest& manifest, double holdout_fraction,
                             std::uint64_t seed);

// Keeps only the listed classes (original ids), re-indexed contiguously.
DatasetManifest subset_classes(const DatasetManifest& manifest, const std::vector<int>& classes);

// Appends `extra` to `orig`. Extra's distinct classes are remapped, in
// ascending order, to orig.class_count, orig.class_count + 1, ...; sample ids
// and provenance are preserved. Record paths are rewritten relative to
// orig.root.
DatasetManifest merge(const DatasetManifest& orig, const DatasetManifest& extra);

}  // namespace auggen::dataset
