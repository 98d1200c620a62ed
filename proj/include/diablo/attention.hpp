#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "diablo/backbone.hpp"
#include "diablo/tensor.hpp"

namespace diablo {

// Feature-wise: one direction per entry, a location goes wholly to one
// branch. Dimension-wise: one direction per (entry, channel), each channel
// of a location is assigned on its own.
enum class SelectionMode { feature_wise, dimension_wise };

// Post-attention merges A into ψ(F); pre-attention merges A into F and
// refines each branch with a shared ψ.
enum class Strategy { pre_attention, post_attention };

struct Dictionary {
  SelectionMode mode = SelectionMode::feature_wise;
  Tensor entries;  // N×m (feature-wise) or N×c×m (dimension-wise)
  double hardness = 5.0;

  std::size_t branches() const { return entries.extent(0); }
  std::size_t direction_width() const { return entries.shape().back(); }
  // Channel count of the maps this dictionary can weight; 0 when any width
  // works (feature-wise).
  std::size_t channels() const {
    return mode == SelectionMode::dimension_wise ? entries.extent(1) : 0;
  }
};

// Unit-normal entries, each direction rescaled to norm 1. `channels` is
// ignored in feature-wise mode.
Dictionary init_dictionary(SelectionMode mode, std::size_t branches, std::size_t width,
                           std::size_t channels, double hardness, std::uint64_t seed);

// N×h×w×c assignment weights, summing to one over the leading axis.
struct AttentionTensor {
  Tensor weights;

  std::size_t branches() const { return weights.extent(0); }
};

// A[n,i,j,k] = softmax_n(α · cos(φ(f_ij), d_n)), repeated over the `channels`
// entries of k.
AttentionTensor select_feature_wise(const Tensor& phi_map, const Dictionary& dictionary,
                                    std::size_t channels);

// A[n,i,j,k] = softmax_n(α · cos(φ(f_ij), d_nk)).
AttentionTensor select_dimension_wise(const Tensor& phi_map, const Dictionary& dictionary);

// Dispatches on dictionary.mode.
AttentionTensor select_attention(const Tensor& phi_map, const Dictionary& dictionary,
                                 std::size_t channels);

// One-hot argmax of the same cosine similarities; ties go to the lowest
// entry index. Not differentiable.
AttentionTensor hard_assign(const Tensor& phi_map, const Dictionary& dictionary,
                            std::size_t channels);

// H[n] = A[n] ⊙ F for every branch n.
std::vector<Tensor> merge(const Tensor& feature_map, const AttentionTensor& attention);

struct BranchHead {
  Tensor weight;  // c × E/N
  Tensor bias;    // E/N
};

// Global average pool, linear embedding, ℓ2 normalization.
Tensor branch_head(const Tensor& branch_map, const BranchHead& head);

struct DiabloConfig {
  Strategy strategy = Strategy::pre_attention;
  SelectionMode mode = SelectionMode::dimension_wise;
  std::size_t branches = 8;
  std::size_t embedding_size = 512;
  double hardness = 5.0;
  // Layer widths of φ and ψ; input widths follow from the feature map.
  std::vector<std::size_t> phi_widths;
  std::vector<std::size_t> psi_widths;

  std::size_t branch_size() const { return embedding_size / branches; }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct DiabloModel {
  DiabloConfig config;
  LayerStack phi;
  LayerStack psi;  // one instance, shared by all branches
  Dictionary dictionary;
  std::vector<BranchHead> heads;

  std::vector<Tensor> parameters() const;
};

// φ and ψ default to two layers of width `channels` when their widths are
// left empty.
DiabloModel init_model(const DiabloConfig& config, std::size_t channels, std::uint64_t seed);

// Attention maps of the model for feature map F.
AttentionTensor attention_maps(const Tensor& feature_map, const DiabloModel& model);

// Per-branch maps H[n] just before the branch heads.
std::vector<Tensor> branch_maps(const Tensor& feature_map, const DiabloModel& model);

// ℓ2-normalized E/N embedding of every branch.
std::vector<Tensor> branch_embeddings(const Tensor& feature_map, const DiabloModel& model);

// G = ψ(F), H = M(G; A), heads, concatenation.
Tensor post_attention_forward(const Tensor& feature_map, const DiabloModel& model);
// G = M(F; A), H[n] = ψ(G[n]), heads, concatenation.
Tensor pre_attention_forward(const Tensor& feature_map, const DiabloModel& model);
// Dispatches on model.config.strategy.
Tensor diablo_forward(const Tensor& feature_map, const DiabloModel& model);

// Attention-free reference: ℓ2(embed(pool(ψ(F)))).
Tensor baseline_forward(const Tensor& feature_map, const LayerStack& psi, const BranchHead& head);

}  // namespace diablo
