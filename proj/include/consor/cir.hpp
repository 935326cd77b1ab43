#pragma once

// Pair reasoning on top of the side network's visual grid: ROI pooling of
// person features, self-attention across the persons of an image, a small
// decoder that lets each pair attend over the grid, and a gated blend with
// the frozen global image token.

#include <string>
#include <vector>

#include <json.hpp>

#include "consor/dataset.hpp"
#include "consor/nn.hpp"

namespace consor {

struct CirConfig {
  int interpersonal_layers = 1;
  int context_layers = 1;
  int heads = 8;
  int mlp_ratio = 4;

  nlohmann::json to_json() const;
  static CirConfig from_json(const nlohmann::json& j);
};

/// Row weights over the grid cells (row-major, gh*gw) such that
/// weights * V equals the ROI-aligned feature of `box`: the mean of 3x3
/// bilinear samples placed at bin centers, with coordinates clamped to the
/// grid. A box smaller than one grid cell is read with a single bilinear
/// sample at its center.
Eigen::RowVectorXd roi_weights(const PersonBox& box, int grid_h, int grid_w);
Eigen::RowVectorXd extract_person_feature(const Mat& v_sn, const PersonBox& box, int grid_h, int grid_w);
/// [1, d] on the tape.
Var extract_person_feature(Var v_sn, const PersonBox& box, int grid_h, int grid_w);

/// Cross-attention weights kept from one decoder pass: one entry per
/// decoder layer, each holding a [2, L^v] matrix per head.
struct AttentionTrace {
  bool retained = false;
  std::vector<AttentionWeights> layers;
};

class CirModule {
 public:
  /// Creates every parameter under the "cir." prefix.
  CirModule(ParamStore& store, const CirConfig& config, int width, int clip_dim, Rng& rng, double init_std);

  /// [N, d] -> [N, d]; no positional information, so person order only
  /// permutes the output.
  Var interpersonal(Tape& tape, Var persons) const;
  /// Two query tokens (p_i, p_j) attend over v_sn; the outputs are
  /// concatenated and projected back to [1, d]. When `trace` is given it
  /// receives the cross-attention weights.
  Var contextual_decode(Tape& tape, Var p_i, Var p_j, Var v_sn, AttentionTrace* trace = nullptr) const;
  /// g = cls_proj(cls); z = sigmoid(Wu u + Wc g + b); z*u + (1-z)*g.
  Var global_fuse(Tape& tape, Var u_bar, Var clip_cls) const;

  const CirConfig& config() const { return config_; }
  const Linear& gate_u() const { return gate_u_; }
  const Linear& gate_clip() const { return gate_clip_; }
  Parameter& gate_bias() const { return *gate_bias_; }

 private:
  CirConfig config_;
  std::vector<TransformerBlock> inter_;
  std::vector<DecoderBlock> context_;
  Linear pair_proj_;
  Linear cls_proj_;
  Linear gate_u_;
  Linear gate_clip_;
  Parameter* gate_bias_ = nullptr;
};

/// {"image_id", "pair": [i, j], "grid": [gh, gw], "layers": [[head maps]]}.
/// Throws std::logic_error when no pass was retained.
nlohmann::json export_attention_maps(const std::string& image_id, int i, int j, int grid_h, int grid_w,
                                     const AttentionTrace& trace);

}  // namespace consor
