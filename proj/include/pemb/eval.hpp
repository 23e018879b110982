#ifndef PEMB_EVAL_HPP_
#define PEMB_EVAL_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "pemb/embed.hpp"
#include "pemb/graph.hpp"
#include "pemb/nn.hpp"
#include "pemb/rng.hpp"

namespace pemb::eval {

using nn::Vec;

// Per-agent collections of interaction-episode embeddings.
struct EmbeddingSet {
  std::map<int, std::vector<Vec>> per_agent;

  std::size_t total() const;
  int dimension() const;
};

// Intra-inter cluster ratio: mean within-agent pairwise distance over mean
// across-agent pairwise distance, with self-pairs included in the numerator
// average exactly as defined. Below 1 indicates an agent-specific signal.
double iicr(const EmbeddingSet& set);

// Embeds every phase episode of every embedded agent under a frozen encoder.
EmbeddingSet build_embedding_set(const embed::Encoder& encoder,
                                 const graph::InteractionGraph& graph,
                                 const graph::SplitSpec& split, graph::Phase phase);

// --- outcome prediction ---

struct OutcomeRow {
  Vec embedding_first;
  Vec embedding_second;
  int label = 0;  // 0 win_first, 1 win_second, 2 draw
  long labeled_episode = -1;
  long embedding_episode = -1;
};

struct OutcomeDataset {
  std::vector<OutcomeRow> rows;
  int embed_dim = 0;
};

// Builds (embedding pair, outcome) rows for arena episodes in a phase. The
// input embeddings come from a different episode on the same edge, so labels
// never leak into their own inputs. augment_swap additionally emits each row
// with sides exchanged and the win labels flipped.
OutcomeDataset build_outcome_dataset(const embed::Encoder& encoder,
                                     const graph::InteractionGraph& graph,
                                     const graph::SplitSpec& split, graph::Phase phase,
                                     bool augment_swap);

struct ClassifierConfig {
  std::vector<int> hidden{100, 100, 100};
  int epochs = 150;
  int batch_size = 32;
  double learning_rate = 1e-3;
};

struct OutcomeClassifier {
  nn::DenseNet net;
  int embed_dim = 0;
};

// Cross-entropy training of the pairwise outcome classifier. Throws
// DegenerateError when the training labels carry fewer than two classes.
OutcomeClassifier train_outcome_classifier(const OutcomeDataset& data,
                                           const ClassifierConfig& config,
                                           std::uint64_t seed);

// Predicted label distribution for one embedding pair.
Vec predict_outcome(const OutcomeClassifier& classifier, const Vec& first,
                    const Vec& second);

double classifier_accuracy(const OutcomeClassifier& classifier,
                           const OutcomeDataset& data);
double majority_class_rate(const OutcomeDataset& data);

// --- principal components ---

struct PcaResult {
  std::vector<Vec> coordinates;  // per input point, k entries each
  Vec eigenvalues;               // top-k, non-increasing
  std::vector<Vec> components;   // k orthonormal directions
  Vec mean;
};

// Centers the points, eigendecomposes the sample covariance with cyclic
// Jacobi rotations (tolerance 1e-10) and projects onto the top k directions.
PcaResult pca_project(const std::vector<Vec>& points, int k);

// Jacobi eigendecomposition of a symmetric matrix given row-major; returns
// eigenpairs sorted by descending eigenvalue.
void symmetric_eigen(std::vector<double> matrix, int dim, Vec& eigenvalues,
                     std::vector<Vec>& eigenvectors, double tolerance = 1e-10);

// --- ablation embeddings ---

enum class AblationMode : std::uint8_t { kZero = 0, kRand = 1 };

// Replacement embeddings for ablation runs: all zeros, or the true embedding
// of a uniformly drawn different agent.
Vec ablate_embedding(AblationMode mode, int embed_dim, int true_agent,
                     const std::map<int, Vec>& agent_embeddings, Rng& rng);

}  // namespace pemb::eval

#endif  // PEMB_EVAL_HPP_
