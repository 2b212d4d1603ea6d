#include "auggen/mixsearch/backend.hpp"

#include <memory>

namespace auggen::mixsearch {

std::vector<Embedding> embed_images(discriminator::EmbeddingModel& f, const std::vector<Tensor>& images) {
  std::vector<Embedding> out;
  if (images.empty()) return out;
  const Tensor e = f.embed_all(images);
  for (std::size_t r = 0; r < images.size(); ++r) {
    const auto row = e.slice(r);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

std::function<SearchBackend()> model_backend_factory(const generator::DenoiserModel& g,
                                                     const discriminator::EmbeddingModel& f, std::size_t batch) {
  return [g, f, batch]() {
    auto gen = std::make_shared<generator::DenoiserModel>(g);
    auto emb = std::make_shared<discriminator::EmbeddingModel>(f);
    SearchBackend b;
    b.class_count = gen->class_count();
    b.generate = [gen, batch](const std::vector<generator::ConditionVector>& c, const std::vector<std::uint64_t>& s) {
      return generator::generate(*gen, c, s, batch);
    };
    b.embed = [emb](const std::vector<Tensor>& images) { return embed_images(*emb, images); };
    return b;
  };
}

}  // namespace auggen::mixsearch
