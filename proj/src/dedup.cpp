#include "corpusforge/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/parallel.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/simd/kernels.hpp"

namespace corpusforge::dedup {

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids,
                                 const std::vector<std::vector<double>>& vectors,
                                 std::vector<std::size_t> char_lens)
    : ids_(std::move(ids)), char_lens_(std::move(char_lens)) {
  if (ids_.size() != vectors.size()) throw ValidationError("embedding ids and rows differ in count");
  if (char_lens_.empty()) char_lens_.assign(ids_.size(), 0);
  if (char_lens_.size() != ids_.size()) throw ValidationError("embedding char_lens and rows differ in count");
  dim_ = vectors.empty() ? 0 : vectors.front().size();
  data_.reserve(ids_.size() * dim_);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (v.size() != dim_ || dim_ == 0) throw ValidationError("embedding dimension mismatch at row " + std::to_string(i));
    double sq = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw ValidationError("non-finite embedding value at row " + std::to_string(i));
      sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0) throw ValidationError("zero embedding vector at row " + std::to_string(i));
    for (double x : v) data_.push_back(x / norm);
  }
}

std::string embedding_text(const data::Record& record) {
  if (record.response.empty()) return record.instruction;
  return record.instruction + "\n" + record.response;
}

EmbeddingMatrix embed_corpus(const data::Corpus& corpus, llm::LlmClient& embedder) {
  if (corpus.empty()) throw ValidationError("cannot embed an empty corpus");
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<std::size_t> lens;
  for (const auto& r : corpus) {
    ids.push_back(r.id);
    texts.push_back(embedding_text(r));
    lens.push_back(r.char_len);
  }
  return EmbeddingMatrix(std::move(ids), embedder.embed(texts), std::move(lens));
}

std::size_t default_k(std::size_t n) { return std::max<std::size_t>(1, (n + 199) / 200); }

namespace {

std::size_t worker_count(std::size_t work_items) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::clamp<std::size_t>(work_items / 2048 + 1, 1, hw);
}

// Assigns every row to its nearest centroid; returns the objective. On unit
// vectors with unit centroids ||x - c||^2 = 2 - 2 x.c.
double assign_step(const EmbeddingMatrix& m, const std::vector<double>& centroids, std::size_t k,
                   std::vector<std::size_t>& assign, std::vector<double>& dist) {
  const std::size_t n = m.rows();
  const std::size_t dim = m.dim();
  const std::size_t chunk = 1024;
  const std::size_t chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, worker_count(n), [&](std::size_t c) {
    std::vector<double> dots(k);
    const std::size_t end = std::min(n, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      simd::dot_rows(m.row(i), centroids, dim, dots);
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (dots[j] > dots[best]) best = j;
      }
      assign[i] = best;
      dist[i] = std::max(0.0, 2.0 - 2.0 * dots[best]);
    }
  });
  double total = 0.0;
  for (double d : dist) total += d;
  return total;
}

}  // namespace

ClusterAssignment kmeans(const EmbeddingMatrix& m, const KMeansOptions& opt) {
  const std::size_t n = m.rows();
  const std::size_t dim = m.dim();
  if (opt.k < 1) throw ValidationError("k must be >= 1");
  if (opt.k > n) throw ValidationError("k (" + std::to_string(opt.k) + ") exceeds row count (" + std::to_string(n) + ")");
  if (opt.max_iter < 1) throw ValidationError("max_iter must be >= 1");
  if (!(opt.tol > 0.0)) throw ValidationError("tol must be > 0");

  const std::size_t k = opt.k;
  ClusterAssignment out;
  out.k = k;
  out.dim = dim;
  out.centroids.assign(k * dim, 0.0);
  out.assign.assign(n, 0);

  // k-means++ seeding.
  Rng rng(opt.seed);
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  auto place = [&](std::size_t c, std::size_t idx) {
    chosen[idx] = 1;
    std::copy_n(m.row(idx).begin(), dim, out.centroids.begin() + static_cast<long>(c * dim));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], simd::squared_distance(m.row(i), out.centroid(c)));
    }
  };
  place(0, rng.below(n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > target) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a centroid; take any unchosen one.
      do pick = rng.below(n);
      while (chosen[pick]);
    }
    place(c, pick);
  }

  std::vector<double> dist(n, 0.0);
  std::vector<double> next(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 1; iter <= opt.max_iter; ++iter) {
    out.objective_history.push_back(assign_step(m, out.centroids, k, out.assign, dist));

    std::fill(next.begin(), next.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = out.assign[i];
      simd::axpy(1.0, m.row(i), std::span<double>(next).subspan(c * dim, dim));
      ++counts[c];
    }
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
      auto cen = std::span<double>(next).subspan(c * dim, dim);
      if (counts[c] == 0) {
        empty.push_back(c);
        continue;
      }
      const double norm = std::sqrt(simd::dot(cen, cen));
      if (norm > 0.0) {
        for (double& x : cen) x /= norm;
      } else {
        // Members cancel out; every unit vector is equally good, keep the old one.
        std::copy_n(out.centroid(c).begin(), dim, cen.begin());
      }
    }
    if (!empty.empty()) {
      std::vector<std::pair<double, std::size_t>> far;
      far.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = out.assign[i];
        far.emplace_back(simd::squared_distance(m.row(i), std::span<const double>(next).subspan(c * dim, dim)), i);
      }
      std::sort(far.begin(), far.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        const std::size_t idx = far[std::min(e, far.size() - 1)].second;
        std::copy_n(m.row(idx).begin(), dim, next.begin() + static_cast<long>(empty[e] * dim));
      }
    }

    double moved = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      moved = std::max(moved, simd::squared_distance(out.centroid(c),
                                                     std::span<const double>(next).subspan(c * dim, dim)));
    }
    out.centroids.swap(next);
    out.iterations_run = iter;
    if (std::sqrt(moved) < opt.tol) {
      out.converged = true;
      break;
    }
  }
  // Final assignment against the final centroids.
  out.objective_history.push_back(assign_step(m, out.centroids, k, out.assign, dist));
  return out;
}

double kmeans_objective(const EmbeddingMatrix& m, const ClusterAssignment& clusters) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    total += simd::squared_distance(m.row(i), clusters.centroid(clusters.assign.at(i)));
  }
  return total;
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::string pick_survivor(const std::vector<std::string>& members,
                          const std::function<std::size_t(const std::string&)>& length_of) {
  std::string best = members.front();
  std::size_t best_len = length_of(best);
  for (const auto& id : members) {
    const std::size_t len = length_of(id);
    if (len > best_len || (len == best_len && id < best)) {
      best = id;
      best_len = len;
    }
  }
  return best;
}

}  // namespace

std::vector<DuplicateGroup> find_duplicates(const EmbeddingMatrix& m, const ClusterAssignment& clusters,
                                            double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("threshold must be in (0, 1]");
  if (clusters.assign.size() != m.rows()) throw ValidationError("cluster assignment does not match matrix");
  const std::size_t dim = m.dim();

  std::vector<std::vector<std::size_t>> members(clusters.k);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (clusters.assign[i] >= clusters.k) throw ValidationError("cluster index out of range");
    members[clusters.assign[i]].push_back(i);
  }

  std::vector<std::vector<DuplicateGroup>> per_cluster(clusters.k);
  parallel_for(clusters.k, worker_count(m.rows()), [&](std::size_t c) {
    const auto& rows = members[c];
    const std::size_t size = rows.size();
    if (size < 2) return;
    std::vector<double> packed(size * dim);
    for (std::size_t a = 0; a < size; ++a) {
      std::copy_n(m.row(rows[a]).begin(), dim, packed.begin() + static_cast<long>(a * dim));
    }
    DisjointSets sets(size);
    std::vector<std::pair<std::size_t, double>> edges;  // (local a, weight)
    std::vector<double> sims(size);
    for (std::size_t a = 0; a + 1 < size; ++a) {
      const std::size_t rest = size - a - 1;
      simd::dot_rows(std::span<const double>(packed).subspan(a * dim, dim),
                     std::span<const double>(packed).subspan((a + 1) * dim, rest * dim), dim,
                     std::span<double>(sims).first(rest));
      for (std::size_t off = 0; off < rest; ++off) {
        if (sims[off] >= threshold) {
          sets.unite(a, a + 1 + off);
          edges.emplace_back(a, std::min(1.0, sims[off]));
        }
      }
    }
    std::unordered_map<std::size_t, std::size_t> group_of;  // root -> group index
    std::vector<DuplicateGroup>& groups = per_cluster[c];
    std::vector<std::size_t> group_sizes;
    for (std::size_t a = 0; a < size; ++a) {
      const std::size_t root = sets.find(a);
      auto [it, inserted] = group_of.emplace(root, groups.size());
      if (inserted) {
        groups.push_back(DuplicateGroup{c, {}, {}, -1.0});
      }
      groups[it->second].members.push_back(m.ids()[rows[a]]);
    }
    for (const auto& [a, w] : edges) {
      auto& g = groups[group_of.at(sets.find(a))];
      g.max_similarity = std::max(g.max_similarity, w);
    }
    std::erase_if(groups, [](const DuplicateGroup& g) { return g.members.size() < 2; });
  });

  std::unordered_map<std::string, std::size_t> length;
  for (std::size_t i = 0; i < m.rows(); ++i) length[m.ids()[i]] = m.char_lens()[i];
  std::vector<DuplicateGroup> all;
  for (auto& groups : per_cluster) {
    for (auto& g : groups) {
      g.kept = pick_survivor(g.members, [&](const std::string& id) { return length.at(id); });
      all.push_back(std::move(g));
    }
  }
  return all;
}

DedupOutcome deduplicate(const data::Corpus& corpus, std::vector<DuplicateGroup> groups) {
  std::unordered_set<std::string> removed_ids;
  for (auto& g : groups) {
    if (g.members.empty()) throw ValidationError("duplicate group without members");
    for (const auto& id : g.members) {
      if (!corpus.contains(id)) throw ValidationError("duplicate group references unknown id " + id);
    }
    g.kept = pick_survivor(g.members, [&](const std::string& id) { return corpus.find(id)->char_len; });
    for (const auto& id : g.members) {
      if (id != g.kept) removed_ids.insert(id);
    }
  }
  std::vector<data::Record> kept;
  std::vector<data::Record> removed;
  for (const auto& r : corpus) {
    (removed_ids.contains(r.id) ? removed : kept).push_back(r);
  }
  DedupOutcome out;
  out.kept = data::Corpus(std::move(kept), corpus.provenance()).with_step("dedup:kept");
  out.removed = data::Corpus(std::move(removed), corpus.provenance()).with_step("dedup:removed");
  out.groups = std::move(groups);
  return out;
}

SemDedupResult semantic_dedup(const data::Corpus& corpus, const EmbeddingMatrix& matrix,
                              const SemDedupOptions& options) {
  if (matrix.rows() != corpus.size()) throw ValidationError("embedding matrix does not match corpus");
  SemDedupResult res;
  if (corpus.empty()) {
    res.outcome.kept = corpus;
    return res;
  }
  KMeansOptions km{options.k.value_or(default_k(corpus.size())), options.seed, options.max_iter, options.tol};
  res.clusters = kmeans(matrix, km);
  res.outcome = deduplicate(corpus, find_duplicates(matrix, res.clusters, options.threshold));
  return res;
}

nlohmann::json to_json(const DuplicateGroup& g) {
  return nlohmann::json{{"cluster", g.cluster},
                        {"members", g.members},
                        {"kept", g.kept},
                        {"max_similarity", g.max_similarity}};
}

}  // namespace corpusforge::dedup
