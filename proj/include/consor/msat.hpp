#pragma once

// Side adapter network: a small transformer that runs beside the frozen
// encoders and blends their intermediate features into its own hidden
// states through sigmoid gates.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/encoder.hpp"
#include "consor/nn.hpp"

namespace consor {

enum class SharingMode { shared, dual, visual_only, text_only, none };

std::string to_string(SharingMode m);
/// Accepts "shared", "dual", "visual-only"/"visual", "text-only"/"text", "none".
SharingMode sharing_mode_from_string(const std::string& s);

/// mu = sigmoid(alpha / tau). Throws std::invalid_argument for tau <= 0.
double gate_value(double alpha, double tau);
/// mu * side + (1 - mu) * clip_projected.
Mat fuse(const Mat& side, const Mat& clip_projected, double mu);
/// Same blend on the tape; `mu` is 1x1.
Var fuse(Var side, Var clip_projected, Var mu);

struct FusionPair {
  int clip_layer = 0;
  int adapter_layer = 0;
  friend bool operator==(const FusionPair&, const FusionPair&) = default;
};

struct FusionSchedule {
  std::vector<FusionPair> visual;
  std::vector<FusionPair> text;

  /// Adapter states run 0..adapter_layers (the last one is the output of the
  /// final block); CLIP layers run 0..encoder_layers.
  void validate(int encoder_layers, int adapter_layers) const;
  bool empty() const { return visual.empty() && text.empty(); }

  /// Evenly spaced CLIP layers into every adapter state: for 12 encoder and
  /// 4 adapter layers this is visual {0,3,6,9,12}->{0..4} and text
  /// {3,6,9,12}->{1..4}.
  static FusionSchedule standard(int encoder_layers, int adapter_layers);
  /// The standard pairs whose CLIP layer is listed, e.g. {9, 12}.
  static FusionSchedule subset(const std::vector<int>& clip_layers, int encoder_layers, int adapter_layers);
  /// "default", "none" or a comma list of CLIP layers.
  static FusionSchedule parse(const std::string& spec, int encoder_layers, int adapter_layers);

  nlohmann::json to_json() const;
  static FusionSchedule from_json(const nlohmann::json& j);
  friend bool operator==(const FusionSchedule&, const FusionSchedule&) = default;
};

struct MsatConfig {
  int width = 192;
  int layers = 4;
  int heads = 6;
  int mlp_ratio = 4;
  double tau = 0.1;
  SharingMode sharing = SharingMode::shared;
  std::optional<FusionSchedule> schedule;  // standard schedule when unset

  FusionSchedule resolved_schedule(int encoder_layers) const;
  nlohmann::json to_json() const;
  static MsatConfig from_json(const nlohmann::json& j);
};

/// Transformer blocks plus the closing layer norm.
struct SideStack {
  std::vector<TransformerBlock> blocks;
  LayerNorm ln_post;
};

struct FusionPoint {
  int clip_layer = 0;
  int adapter_layer = 0;
  Linear clip_proj;
  Parameter* alpha = nullptr;  // [1,1]
};

/// Parameter counts grouped by role.
struct MsatCensus {
  std::size_t blocks = 0;      // transformer blocks and closing layer norms
  std::size_t embeddings = 0;  // patch / position embeddings, text down projection
  std::size_t clip_proj = 0;   // per-fusion-point projections and frozen-branch projections
  std::size_t gates = 0;
  std::size_t out_proj = 0;
  std::size_t total() const { return blocks + embeddings + clip_proj + gates + out_proj; }
  nlohmann::json to_json() const;
};

class SideAdapter {
 public:
  /// Creates every parameter under the "msat." prefix.
  SideAdapter(ParamStore& store, const MsatConfig& config, const EncoderConfig& encoder, Rng& rng,
              double init_std);
  SideAdapter(const SideAdapter&) = delete;
  SideAdapter& operator=(const SideAdapter&) = delete;

  /// V^SN as [L^v, width].
  Var visual_forward(Tape& tape, const VisualFeatures& vf) const;
  /// Returns the embedded [EOT] token as [1, width]; the full sequence is
  /// written to `sequence` when given.
  Var text_forward(Tape& tape, const TextFeatures& tf, Var* sequence = nullptr) const;

  bool visual_has_side_network() const { return visual_stack_ != nullptr; }
  bool text_has_side_network() const { return text_stack_ != nullptr; }
  const SideStack* visual_stack() const { return visual_stack_; }
  const SideStack* text_stack() const { return text_stack_; }
  const std::vector<FusionPoint>& visual_points() const { return visual_points_; }
  const std::vector<FusionPoint>& text_points() const { return text_points_; }
  const MsatConfig& config() const { return config_; }
  const FusionSchedule& schedule() const { return schedule_; }

  static MsatCensus census(const ParamStore& store);

 private:
  Var run_stack(Tape& tape, const SideStack& stack, Var x, const std::vector<FusionPoint>& points,
                const std::vector<Mat>& clip_layers, Eigen::Index rows, const Mat* mask) const;

  MsatConfig config_;
  EncoderConfig encoder_;
  FusionSchedule schedule_;
  std::vector<SideStack> stacks_;
  const SideStack* visual_stack_ = nullptr;
  const SideStack* text_stack_ = nullptr;
  std::vector<FusionPoint> visual_points_;
  std::vector<FusionPoint> text_points_;
  Linear patch_embed_;
  Parameter* vis_pos_ = nullptr;
  Linear text_down_;
  Linear vis_frozen_proj_;  // last CLIP layer -> width, when the visual branch has no side network
  Linear txt_frozen_proj_;  // frozen [EOT] -> width, when the text branch has no side network
  Linear out_proj_;
};

}  // namespace consor
