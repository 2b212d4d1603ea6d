#include "auggen/dataset/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "auggen/numerics/rng.hpp"

namespace auggen::dataset {

namespace fs = std::filesystem;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::orig: return "orig";
    case Provenance::repro: return "repro";
    case Provenance::aug: return "aug";
  }
  return "orig";
}

Provenance parse_provenance(std::string_view s) {
  if (s == "orig") return Provenance::orig;
  if (s == "repro") return Provenance::repro;
  if (s == "aug") return Provenance::aug;
  throw FormatError("unknown provenance: " + std::string(s));
}

std::vector<int> DatasetManifest::class_ids() const {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.class_id);
  return {ids.begin(), ids.end()};
}

void DatasetManifest::validate(bool check_files) const {
  std::set<std::uint64_t> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.sample_id).second) {
      throw FormatError("duplicate sample id " + std::to_string(r.sample_id));
    }
    if (r.class_id < 0 || r.class_id >= class_count) {
      throw FormatError("sample " + std::to_string(r.sample_id) + " has class " +
                        std::to_string(r.class_id) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
    if (r.provenance == Provenance::aug && !r.recipe_id) {
      throw FormatError("aug sample " + std::to_string(r.sample_id) + " has no mix recipe");
    }
    if (check_files && !fs::exists(image_path(r))) {
      throw FormatError("missing image file " + image_path(r).string());
    }
  }
  if (!class_latents.empty() && class_latents.size() != static_cast<std::size_t>(class_count)) {
    throw FormatError("latent table size does not match class count");
  }
}

std::string manifest_to_text(const DatasetManifest& m) {
  std::ostringstream os;
  os << "# auggen-manifest 1\n";
  os << "# class_count " << m.class_count << "\n";
  os << "# source_seed " << m.source_seed << "\n";
  for (const auto& note : m.notes) os << "# note " << note << "\n";
  os << std::setprecision(17);
  for (std::size_t c = 0; c < m.class_latents.size(); ++c) {
    os << "# latent " << c;
    for (double v : m.class_latents[c]) os << ' ' << v;
    os << "\n";
  }
  for (const auto& r : m.records) {
    os << r.sample_id << '\t' << r.class_id << '\t' << to_string(r.provenance) << '\t';
    if (r.recipe_id) {
      os << *r.recipe_id;
    } else {
      os << '-';
    }
    os << '\t' << r.path << "\n";
  }
  return os.str();
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  DatasetManifest rebased = manifest;
  const fs::path dir = fs::absolute(file).parent_path().lexically_normal();
  const fs::path root = fs::absolute(manifest.root).lexically_normal();
  if (dir != root) {
    for (auto& r : rebased.records) r.path = (root / r.path).lexically_normal().lexically_relative(dir).generic_string();
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest " + file.string());
  out << manifest_to_text(rebased);
}

DatasetManifest load_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open manifest " + file.string());
  DatasetManifest m;
  m.root = fs::absolute(file).parent_path().lexically_normal();
  std::map<int, std::vector<double>> latents;
  std::string line;
  bool saw_magic = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "auggen-manifest") {
        int version = 0;
        hs >> version;
        if (version != 1) throw FormatError("unsupported manifest version");
        saw_magic = true;
      } else if (key == "class_count") {
        hs >> m.class_count;
      } else if (key == "source_seed") {
        hs >> m.source_seed;
      } else if (key == "latent") {
        int c = 0;
        hs >> c;
        std::vector<double> v;
        double x = 0;
        while (hs >> x) v.push_back(x);
        latents[c] = std::move(v);
      } else if (key == "note") {
        std::string rest;
        std::getline(hs >> std::ws, rest);
        m.notes.push_back(rest);
      }
      continue;
    }
    std::istringstream ls(line);
    ManifestRecord r;
    std::string prov, recipe;
    if (!(ls >> r.sample_id >> r.class_id >> prov >> recipe)) {
      throw FormatError("malformed manifest line: " + line);
    }
    std::getline(ls >> std::ws, r.path);
    r.provenance = parse_provenance(prov);
    if (recipe != "-") r.recipe_id = std::stoull(recipe);
    m.records.push_back(std::move(r));
  }
  if (!saw_magic) throw FormatError(file.string() + " is not an auggen manifest");
  for (auto& [c, v] : latents) {
    if (c != static_cast<int>(m.class_latents.size())) throw FormatError("latent table has gaps");
    m.class_latents.push_back(std::move(v));
  }
  m.validate(/*check_files=*/true);
  return m;
}

LabeledImages load_images(const DatasetManifest& manifest) {
  LabeledImages out;
  out.images.reserve(manifest.records.size());
  out.labels.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    out.images.push_back(read_image(manifest.image_path(r)));
    out.labels.push_back(r.class_id);
  }
  return out;
}

DatasetManifest subset_classes(const DatasetManifest& manifest, const std::vector<int>& classes) {
  std::vector<int> sorted = classes;
  std::sort(sorted.begin(), sorted.end());
  std::map<int, int> remap;
  for (std::size_t i = 0; i < sorted.size(); ++i) remap[sorted[i]] = static_cast<int>(i);
  DatasetManifest out;
  out.root = manifest.root;
  out.source_seed = manifest.source_seed;
  out.notes = manifest.notes;
  out.class_count = static_cast<int>(sorted.size());
  for (const auto& r : manifest.records) {
    auto it = remap.find(r.class_id);
    if (it == remap.end()) continue;
    ManifestRecord copy = r;
    copy.class_id = it->second;
    out.records.push_back(std::move(copy));
  }
  if (!manifest.class_latents.empty()) {
    for (int c : sorted) out.class_latents.push_back(manifest.class_latents.at(c));
  }
  return out;
}

SplitResult split_identities(const DatasetManifest& manifest, double holdout_fraction,
                             std::uint64_t seed) {
  if (!(holdout_fraction > 0 && holdout_fraction < 1)) {
    throw InvalidArgument("holdout fraction must be in (0, 1)");
  }
  std::vector<int> classes = manifest.class_ids();
  const auto n = classes.size();
  const auto n_held = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  if (n_held < 2 || n - n_held < 2) {
    throw InvalidArgument("split leaves fewer than 2 classes on one side (" +
                          std::to_string(n - n_held) + " train / " + std::to_string(n_held) +
                          " heldout)");
  }
  numerics::Rng rng(numerics::derive_seed(seed, {numerics::tag("split_identities")}));
  std::shuffle(classes.begin(), classes.end(), rng.engine());
  SplitResult out;
  out.heldout_classes.assign(classes.begin(), classes.begin() + static_cast<long>(n_held));
  out.train_classes.assign(classes.begin() + static_cast<long>(n_held), classes.end());
  std::sort(out.heldout_classes.begin(), out.heldout_classes.end());
  std::sort(out.train_classes.begin(), out.train_classes.end());
  out.train = subset_classes(manifest, out.train_classes);
  out.heldout = subset_classes(manifest, out.heldout_classes);
  return out;
}

DatasetManifest merge(const DatasetManifest& orig, const DatasetManifest& extra) {
  DatasetManifest out = orig;
  if (extra.records.empty()) return out;
  const std::vector<int> extra_classes = extra.class_ids();
  std::map<int, int> remap;
  for (std::size_t i = 0; i < extra_classes.size(); ++i) {
    remap[extra_classes[i]] = orig.class_count + static_cast<int>(i);
  }
  const std::vector<int> orig_classes = orig.class_ids();
  const std::set<int> orig_ids(orig_classes.begin(), orig_classes.end());
  for (const auto& [from, to] : remap) {
    if (orig_ids.count(to) != 0) {
      throw Error("internal error: class id collision after remap (" + std::to_string(from) +
                  " -> " + std::to_string(to) + ")");
    }
  }
  const bool rebase = !orig.root.empty() && !extra.root.empty();
  const fs::path root = rebase ? fs::absolute(orig.root).lexically_normal() : fs::path{};
  const fs::path extra_root = rebase ? fs::absolute(extra.root).lexically_normal() : fs::path{};
  std::set<std::uint64_t> ids;
  for (const auto& r : orig.records) ids.insert(r.sample_id);
  for (const auto& r : extra.records) {
    if (!ids.insert(r.sample_id).second) {
      throw Error("merge: sample id " + std::to_string(r.sample_id) + " present in both manifests");
    }
    ManifestRecord copy = r;
    copy.class_id = remap.at(r.class_id);
    if (rebase) {
      copy.path = (extra_root / r.path).lexically_normal().lexically_relative(root).generic_string();
    }
    out.records.push_back(std::move(copy));
  }
  out.class_count = orig.class_count + static_cast<int>(extra_classes.size());
  const bool latents_complete =
      !orig.class_latents.empty() && !extra.class_latents.empty() &&
      static_cast<int>(extra.class_latents.size()) == extra.class_count;
  if (latents_complete) {
    for (int c : extra_classes) out.class_latents.push_back(extra.class_latents.at(c));
  } else {
    out.class_latents.clear();
  }
  for (const auto& note : extra.notes) out.notes.push_back(note);
  return out;
}

}  // namespace auggen::dataset
