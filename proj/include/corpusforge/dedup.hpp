#pragma once

// Semantic deduplication: embed records, cluster with k-means, link
// within-cluster pairs whose cosine reaches the threshold, and keep the
// longest record of every connected group.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corpusforge/data_model.hpp"
#include "corpusforge/llm_client.hpp"
#include "json.hpp"

namespace corpusforge::dedup {

// Row-major unit vectors, one per record id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // Normalizes every row. Throws ValidationError on ragged rows, zero vectors
  // or non-finite values. `char_lens` may be empty (all zero).
  EmbeddingMatrix(std::vector<std::string> ids, const std::vector<std::vector<double>>& vectors,
                  std::vector<std::size_t> char_lens = {});

  std::size_t rows() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::size_t>& char_lens() const { return char_lens_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dim_, dim_);
  }
  std::span<const double> data() const { return data_; }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::size_t> char_lens_;
};

// Text that represents a record for embedding.
std::string embedding_text(const data::Record& record);

EmbeddingMatrix embed_corpus(const data::Corpus& corpus, llm::LlmClient& embedder);

struct KMeansOptions {
  std::size_t k = 1;
  std::uint64_t seed = 42;
  std::size_t max_iter = 100;
  double tol = 1e-4;
};

struct ClusterAssignment {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;   // k * dim, row-major, unit length
  std::vector<std::size_t> assign; // per matrix row
  std::size_t iterations_run = 0;
  bool converged = false;
  // Sum of squared distances to assigned centroids after each assignment step.
  std::vector<double> objective_history;

  std::span<const double> centroid(std::size_t c) const {
    return std::span<const double>(centroids).subspan(c * dim, dim);
  }
};

std::size_t default_k(std::size_t n);

// k-means++ seeding, then Lloyd iterations on the unit sphere (centroids are
// re-normalized means). Stops when the largest centroid move is below tol or
// after max_iter iterations. An emptied cluster is re-seeded with the point
// farthest from its own centroid.
ClusterAssignment kmeans(const EmbeddingMatrix& matrix, const KMeansOptions& options);

double kmeans_objective(const EmbeddingMatrix& matrix, const ClusterAssignment& clusters);

struct DuplicateGroup {
  std::size_t cluster = 0;
  std::vector<std::string> members;  // matrix row order
  std::string kept;
  double max_similarity = 0.0;
};

// Connected components (size >= 2) of the graph whose edges join members of
// one cluster with cosine >= threshold. `kept` is the longest member by the
// matrix char_lens, ties to the smallest id.
std::vector<DuplicateGroup> find_duplicates(const EmbeddingMatrix& matrix,
                                            const ClusterAssignment& clusters, double threshold);

struct DedupOutcome {
  data::Corpus kept;
  data::Corpus removed;
  std::vector<DuplicateGroup> groups;  // `kept` re-resolved against the corpus
};

// Keeps the longest record (ties: smallest id) from every group and all
// records that are in no group. Throws ValidationError on unknown ids.
DedupOutcome deduplicate(const data::Corpus& corpus, std::vector<DuplicateGroup> groups);

struct SemDedupOptions {
  double threshold = 0.95;
  std::optional<std::size_t> k;  // default_k(n) when unset
  std::uint64_t seed = 42;
  std::size_t max_iter = 100;
  double tol = 1e-4;
};

struct SemDedupResult {
  DedupOutcome outcome;
  ClusterAssignment clusters;
};

SemDedupResult semantic_dedup(const data::Corpus& corpus, const EmbeddingMatrix& matrix,
                              const SemDedupOptions& options);

nlohmann::json to_json(const DuplicateGroup& group);

}  // namespace corpusforge::dedup
