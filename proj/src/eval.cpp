#include "pemb/eval.hpp"

#include <algorithm>
#include <cmath>

#include "pemb/errors.hpp"

namespace pemb::eval {

namespace {

double distance(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

}  // namespace

std::size_t EmbeddingSet::total() const {
  std::size_t n = 0;
  for (const auto& [agent, embeddings] : per_agent) n += embeddings.size();
  return n;
}

int EmbeddingSet::dimension() const {
  for (const auto& [agent, embeddings] : per_agent) {
    if (!embeddings.empty()) return static_cast<int>(embeddings.front().size());
  }
  return 0;
}

double iicr(const EmbeddingSet& set) {
  const int n = static_cast<int>(set.per_agent.size());
  if (n < 2) throw ConfigError("iicr: need at least 2 agents");
  for (const auto& [agent, embeddings] : set.per_agent) {
    if (embeddings.empty()) {
      throw ConfigError("iicr: agent " + std::to_string(agent) + " has no embeddings");
    }
  }

  double intra = 0.0;
  for (const auto& [agent, t] : set.per_agent) {
    double sum = 0.0;
    for (const Vec& a : t)
      for (const Vec& b : t) sum += distance(a, b);
    intra += sum / (static_cast<double>(t.size()) * static_cast<double>(t.size()));
  }
  intra /= static_cast<double>(n);

  double inter = 0.0;
  for (const auto& [agent_i, ti] : set.per_agent) {
    for (const auto& [agent_j, tj] : set.per_agent) {
      if (agent_i == agent_j) continue;
      double sum = 0.0;
      for (const Vec& a : ti)
        for (const Vec& b : tj) sum += distance(a, b);
      inter += sum / (static_cast<double>(ti.size()) * static_cast<double>(tj.size()));
    }
  }
  inter /= static_cast<double>(n) * static_cast<double>(n - 1);

  if (inter == 0.0) {
    throw DegenerateError("iicr: all embeddings identical, ratio undefined");
  }
  return intra / inter;
}

EmbeddingSet build_embedding_set(const embed::Encoder& encoder,
                                 const graph::InteractionGraph& graph,
                                 const graph::SplitSpec& split, graph::Phase phase) {
  EmbeddingSet set;
  for (int agent : graph.embedded_agents()) {
    const std::vector<long> ids = graph::episodes_for_agent(graph, split, agent, phase);
    if (ids.empty()) continue;
    std::vector<Vec>& bucket = set.per_agent[agent];
    bucket.reserve(ids.size());
    for (long id : ids) {
      bucket.push_back(
          embed::embed_episode(encoder, env::agent_view(graph.episode(id), agent)));
    }
  }
  return set;
}

OutcomeDataset build_outcome_dataset(const embed::Encoder& encoder,
                                     const graph::InteractionGraph& graph,
                                     const graph::SplitSpec& split, graph::Phase phase,
                                     bool augment_swap) {
  if (graph.env_kind != env::EnvKind::kArena) {
    throw ConfigError("outcome dataset requires arena episodes");
  }
  OutcomeDataset data;
  data.embed_dim = encoder.embed_dim;
  for (int edge_index : split.edges_of(phase)) {
    const graph::Edge& edge = graph.edges[edge_index];
    const std::size_t count = edge.episode_ids.size();
    for (std::size_t k = 0; k < count; ++k) {
      const long labeled = edge.episode_ids[k];
      const long source = edge.episode_ids[(k + 1) % count];  // held-out same edge
      if (source == labeled) continue;
      const env::Episode& episode = graph.episode(labeled);
      if (!episode.arena_outcome) continue;
      OutcomeRow row;
      row.label = static_cast<int>(*episode.arena_outcome);
      row.labeled_episode = labeled;
      row.embedding_episode = source;
      const env::Episode& basis = graph.episode(source);
      row.embedding_first =
          embed::embed_episode(encoder, env::agent_view(basis, edge.a));
      row.embedding_second =
          embed::embed_episode(encoder, env::agent_view(basis, edge.b));
      if (augment_swap) {
        OutcomeRow swapped = row;
        std::swap(swapped.embedding_first, swapped.embedding_second);
        if (swapped.label == 0) swapped.label = 1;
        else if (swapped.label == 1) swapped.label = 0;
        data.rows.push_back(std::move(swapped));
      }
      data.rows.push_back(std::move(row));
    }
  }
  return data;
}

namespace {

Vec classifier_input(const OutcomeRow& row) {
  Vec input = row.embedding_first;
  input.insert(input.end(), row.embedding_second.begin(), row.embedding_second.end());
  return input;
}

}  // namespace

OutcomeClassifier train_outcome_classifier(const OutcomeDataset& data,
                                           const ClassifierConfig& config,
                                           std::uint64_t seed) {
  if (data.rows.empty()) throw DegenerateError("outcome classifier: empty dataset");
  std::array<int, 3> class_counts{};
  for (const OutcomeRow& row : data.rows) ++class_counts[row.label];
  int classes_present = 0;
  for (int c : class_counts) classes_present += c > 0 ? 1 : 0;
  if (classes_present < 2) {
    throw DegenerateError("outcome classifier: training labels carry a single class");
  }

  OutcomeClassifier classifier;
  classifier.embed_dim = data.embed_dim;
  std::vector<int> layers{2 * data.embed_dim};
  layers.insert(layers.end(), config.hidden.begin(), config.hidden.end());
  layers.push_back(3);
  classifier.net = nn::mlp_init(layers, derive_seed(seed, 0xC1A5));
  nn::AdamState opt = nn::adam_init(classifier.net, config.learning_rate);

  Rng rng(derive_seed(seed, 0xC1A6));
  std::vector<std::size_t> order(data.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  nn::ForwardCache cache;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t end = std::min(order.size(), cursor + config.batch_size);
      nn::GradientBundle grads = nn::zero_gradients(classifier.net);
      for (std::size_t k = cursor; k < end; ++k) {
        const OutcomeRow& row = data.rows[order[k]];
        const Vec logits = nn::mlp_forward(classifier.net, classifier_input(row), &cache);
        const auto [log_prob, logit_grad] = nn::categorical_log_prob(logits, row.label);
        (void)log_prob;
        Vec loss_grad(logit_grad.size());
        for (std::size_t i = 0; i < logit_grad.size(); ++i) loss_grad[i] = -logit_grad[i];
        nn::mlp_backward_accum(classifier.net, cache, loss_grad,
                               1.0 / static_cast<double>(end - cursor), grads, nullptr);
      }
      nn::adam_step(classifier.net, grads, opt);
      cursor = end;
    }
  }
  return classifier;
}

Vec predict_outcome(const OutcomeClassifier& classifier, const Vec& first,
                    const Vec& second) {
  Vec input = first;
  input.insert(input.end(), second.begin(), second.end());
  return nn::softmax(nn::mlp_forward(classifier.net, input));
}

double classifier_accuracy(const OutcomeClassifier& classifier,
                           const OutcomeDataset& data) {
  if (data.rows.empty()) throw DegenerateError("classifier accuracy: empty dataset");
  std::size_t correct = 0;
  for (const OutcomeRow& row : data.rows) {
    const Vec probs = predict_outcome(classifier, row.embedding_first,
                                      row.embedding_second);
    const int argmax = static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (argmax == row.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.rows.size());
}

double majority_class_rate(const OutcomeDataset& data) {
  if (data.rows.empty()) throw DegenerateError("majority rate: empty dataset");
  std::array<std::size_t, 3> counts{};
  for (const OutcomeRow& row : data.rows) ++counts[row.label];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(data.rows.size());
}

void symmetric_eigen(std::vector<double> matrix, int dim, Vec& eigenvalues,
                     std::vector<Vec>& eigenvectors, double tolerance) {
  if (static_cast<int>(matrix.size()) != dim * dim) {
    throw ShapeError("symmetric_eigen: matrix size mismatch");
  }
  auto at = [&](int r, int c) -> double& { return matrix[r * dim + c]; };

  // Eigenvector accumulator starts as the identity.
  std::vector<double> v(dim * dim, 0.0);
  for (int i = 0; i < dim; ++i) v[i * dim + i] = 1.0;

  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < dim; ++p)
      for (int q = p + 1; q < dim; ++q) off += at(p, q) * at(p, q);
    if (std::sqrt(off) <= tolerance) break;
    if (sweep == 199) throw NumericError("symmetric_eigen: Jacobi did not converge");

    for (int p = 0; p < dim; ++p) {
      for (int q = p + 1; q < dim; ++q) {
        const double apq = at(p, q);
        if (std::fabs(apq) <= tolerance * 1e-2) continue;
        const double app = at(p, p), aqq = at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < dim; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < dim; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < dim; ++k) {
          const double vkp = v[k * dim + p], vkq = v[k * dim + q];
          v[k * dim + p] = c * vkp - s * vkq;
          v[k * dim + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> index(dim);
  for (int i = 0; i < dim; ++i) index[i] = i;
  std::sort(index.begin(), index.end(),
            [&](int a, int b) { return at(a, a) > at(b, b); });

  eigenvalues.assign(dim, 0.0);
  eigenvectors.assign(dim, Vec(dim, 0.0));
  for (int rank = 0; rank < dim; ++rank) {
    eigenvalues[rank] = at(index[rank], index[rank]);
    for (int k = 0; k < dim; ++k) eigenvectors[rank][k] = v[k * dim + index[rank]];
  }
}

PcaResult pca_project(const std::vector<Vec>& points, int k) {
  if (points.empty()) throw ConfigError("pca_project: no points");
  const int d = static_cast<int>(points.front().size());
  if (k < 1 || k > d) throw ConfigError("pca_project: component count out of range");
  if (static_cast<int>(points.size()) < k + 1) {
    throw ConfigError("pca_project: need at least k+1 points");
  }

  PcaResult result;
  result.mean.assign(d, 0.0);
  for (const Vec& x : points) {
    if (static_cast<int>(x.size()) != d) throw ShapeError("pca_project: ragged points");
    for (int i = 0; i < d; ++i) result.mean[i] += x[i];
  }
  for (double& m : result.mean) m /= static_cast<double>(points.size());

  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (const Vec& x : points) {
    for (int r = 0; r < d; ++r) {
      const double xr = x[r] - result.mean[r];
      for (int c = r; c < d; ++c) {
        cov[r * d + c] += xr * (x[c] - result.mean[c]);
      }
    }
  }
  const double denom = static_cast<double>(points.size() - 1);
  for (int r = 0; r < d; ++r) {
    for (int c = r; c < d; ++c) {
      cov[r * d + c] /= denom;
      cov[c * d + r] = cov[r * d + c];
    }
  }

  Vec eigenvalues;
  std::vector<Vec> eigenvectors;
  symmetric_eigen(std::move(cov), d, eigenvalues, eigenvectors, 1e-10);

  result.eigenvalues.assign(eigenvalues.begin(), eigenvalues.begin() + k);
  result.components.assign(eigenvectors.begin(), eigenvectors.begin() + k);
  result.coordinates.reserve(points.size());
  for (const Vec& x : points) {
    Vec coord(k, 0.0);
    for (int c = 0; c < k; ++c) {
      for (int i = 0; i < d; ++i) {
        coord[c] += (x[i] - result.mean[i]) * result.components[c][i];
      }
    }
    result.coordinates.push_back(std::move(coord));
  }
  return result;
}

Vec ablate_embedding(AblationMode mode, int embed_dim, int true_agent,
                     const std::map<int, Vec>& agent_embeddings, Rng& rng) {
  if (mode == AblationMode::kZero) return Vec(embed_dim, 0.0);
  std::vector<int> others;
  for (const auto& [agent, embedding] : agent_embeddings) {
    if (agent != true_agent) others.push_back(agent);
  }
  if (others.empty()) {
    throw ConfigError("ablate_embedding: random mode needs at least 2 known agents");
  }
  const int pick = others[rng.uniform_int(static_cast<int>(others.size()))];
  return agent_embeddings.at(pick);
}

}  // namespace pemb::eval
