#pragma once

#include "auggen/discriminator/model.hpp"
#include "auggen/generator/model.hpp"
#include "auggen/mixsearch/search.hpp"

namespace auggen::mixsearch {

// Backends over private copies of the trained models, so workers share nothing.
std::function<SearchBackend()> model_backend_factory(const generator::DenoiserModel& g,
                                                     const discriminator::EmbeddingModel& f, std::size_t batch = 32);

// Unit embeddings of `images` as plain vectors.
std::vector<Embedding> embed_images(discriminator::EmbeddingModel& f, const std::vector<Tensor>& images);

}  // namespace auggen::mixsearch
