#include "consor/cir.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace consor {

nlohmann::json CirConfig::to_json() const {
  return {{"interpersonal_layers", interpersonal_layers}, {"context_layers", context_layers},
          {"heads", heads}, {"mlp_ratio", mlp_ratio}};
}

CirConfig CirConfig::from_json(const nlohmann::json& j) {
  CirConfig c;
  c.interpersonal_layers = j.value("interpersonal_layers", c.interpersonal_layers);
  c.context_layers = j.value("context_layers", c.context_layers);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  if (c.interpersonal_layers < 0 || c.context_layers < 0 || c.heads < 1) {
    throw std::invalid_argument("cir layer counts must be >= 0 and heads >= 1");
  }
  return c;
}

namespace {

void add_bilinear(Eigen::RowVectorXd& w, double y, double x, int gh, int gw, double weight) {
  y = std::clamp(y, 0.0, static_cast<double>(gh - 1));
  x = std::clamp(x, 0.0, static_cast<double>(gw - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, gh - 1);
  const int x1 = std::min(x0 + 1, gw - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  w(y0 * gw + x0) += weight * (1.0 - fy) * (1.0 - fx);
  w(y0 * gw + x1) += weight * (1.0 - fy) * fx;
  w(y1 * gw + x0) += weight * fy * (1.0 - fx);
  w(y1 * gw + x1) += weight * fy * fx;
}

// Average of the clamped 1-D interpolation weights over [lo, hi] in pixel units.
// Between consecutive cell centres the weights are linear, so each piece is
// integrated exactly by its midpoint.
Eigen::VectorXd axis_weights(double lo, double hi, int g) {
  std::vector<double> cuts{lo, hi};
  for (int k = 0; k < g; ++k) {
    const double knot = k + 0.5;
    if (knot > lo && knot < hi) cuts.push_back(knot);
  }
  std::sort(cuts.begin(), cuts.end());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(g);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    if (len <= 0.0) continue;
    const double u = std::clamp(0.5 * (cuts[k] + cuts[k + 1]) - 0.5, 0.0, static_cast<double>(g - 1));
    const int i0 = static_cast<int>(std::floor(u));
    const int i1 = std::min(i0 + 1, g - 1);
    w(i0) += len * (1.0 - (u - i0));
    w(i1) += len * (u - i0);
  }
  return w / (hi - lo);
}

}  // namespace

Eigen::RowVectorXd roi_weights(const PersonBox& box, int grid_h, int grid_w) {
  if (!box.valid()) throw std::invalid_argument("invalid person box");
  if (grid_h < 1 || grid_w < 1) throw std::invalid_argument("grid dims must be positive");
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Zero(grid_h * grid_w);
  const double bx0 = box.x0 * grid_w, bx1 = box.x1 * grid_w;
  const double by0 = box.y0 * grid_h, by1 = box.y1 * grid_h;
  if ((bx1 - bx0) * (by1 - by0) < 1.0) {
    add_bilinear(w, 0.5 * (by0 + by1) - 0.5, 0.5 * (bx0 + bx1) - 0.5, grid_h, grid_w, 1.0);
    return w;
  }
  // Each of the 3x3 bins averages the interpolated field over its area; the
  // bins are equal in size so their mean is the average over the whole box.
  Mat acc = Mat::Zero(grid_h, grid_w);
  const double bin_w = (bx1 - bx0) / 3.0;
  const double bin_h = (by1 - by0) / 3.0;
  for (int r = 0; r < 3; ++r) {
    const Eigen::VectorXd wy = axis_weights(by0 + r * bin_h, by0 + (r + 1) * bin_h, grid_h);
    for (int c = 0; c < 3; ++c) {
      const Eigen::VectorXd wx = axis_weights(bx0 + c * bin_w, bx0 + (c + 1) * bin_w, grid_w);
      acc += wy * wx.transpose() / 9.0;
    }
  }
  return Eigen::Map<const Eigen::RowVectorXd>(acc.data(), acc.size());
}

Eigen::RowVectorXd extract_person_feature(const Mat& v_sn, const PersonBox& box, int grid_h, int grid_w) {
  if (v_sn.rows() != grid_h * grid_w) throw std::invalid_argument("feature grid does not match grid dims");
  return roi_weights(box, grid_h, grid_w) * v_sn;
}

Var extract_person_feature(Var v_sn, const PersonBox& box, int grid_h, int grid_w) {
  if (v_sn.rows() != grid_h * grid_w) throw std::invalid_argument("feature grid does not match grid dims");
  Mat w = roi_weights(box, grid_h, grid_w);
  return ad::matmul(v_sn.tape().constant(std::move(w)), v_sn);
}

CirModule::CirModule(ParamStore& store, const CirConfig& config, int width, int clip_dim, Rng& rng,
                     double init_std)
    : config_(config) {
  if (width % config_.heads != 0) throw std::invalid_argument("cir width must be a multiple of its head count");
  for (int k = 0; k < config_.interpersonal_layers; ++k) {
    inter_.push_back(TransformerBlock::create(store, "cir.inter." + std::to_string(k), width, config_.heads,
                                              config_.mlp_ratio, rng, init_std));
  }
  for (int k = 0; k < config_.context_layers; ++k) {
    context_.push_back(DecoderBlock::create(store, "cir.ctx." + std::to_string(k), width, config_.heads,
                                            config_.mlp_ratio, rng, init_std));
  }
  pair_proj_ = Linear::create(store, "cir.pair_proj", 2 * width, width, rng, init_std);
  cls_proj_ = Linear::create(store, "cir.cls_proj", clip_dim, width, rng, init_std);
  gate_u_ = Linear::create(store, "cir.gate_u", width, width, rng, init_std, false);
  gate_clip_ = Linear::create(store, "cir.gate_clip", width, width, rng, init_std, false);
  gate_bias_ = &store.create("cir.gate_bias", Mat::Zero(1, width), false);
}

Var CirModule::interpersonal(Tape& tape, Var persons) const {
  for (const auto& block : inter_) persons = block(tape, persons);
  return persons;
}

Var CirModule::contextual_decode(Tape& tape, Var p_i, Var p_j, Var v_sn, AttentionTrace* trace) const {
  Var q = ad::concat_rows({p_i, p_j});
  if (trace != nullptr) {
    trace->retained = true;
    trace->layers.clear();
  }
  for (const auto& block : context_) {
    AttentionWeights keep;
    q = block(tape, q, v_sn, trace != nullptr ? &keep : nullptr);
    if (trace != nullptr) trace->layers.push_back(std::move(keep));
  }
  Var joined = ad::concat_cols({ad::slice_rows(q, 0, 1), ad::slice_rows(q, 1, 1)});
  return pair_proj_(tape, joined);
}

Var CirModule::global_fuse(Tape& tape, Var u_bar, Var clip_cls) const {
  Var g = cls_proj_(tape, clip_cls);
  Var z = ad::sigmoid(ad::add_row(ad::add(gate_u_(tape, u_bar), gate_clip_(tape, g)), tape.param(*gate_bias_)));
  return ad::add(ad::mul(z, u_bar), ad::mul(ad::one_minus(z), g));
}

nlohmann::json export_attention_maps(const std::string& image_id, int i, int j, int grid_h, int grid_w,
                                     const AttentionTrace& trace) {
  if (!trace.retained) throw std::logic_error("no attention was retained for pair " + image_id);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& heads : trace.layers) {
    nlohmann::json layer = nlohmann::json::array();
    for (const Mat& m : heads) {
      if (m.cols() != static_cast<Eigen::Index>(grid_h) * grid_w) {
        throw std::invalid_argument("attention map width does not match the grid");
      }
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols()));
      }
      layer.push_back(std::move(rows));
    }
    layers.push_back(std::move(layer));
  }
  return {{"image_id", image_id}, {"pair", {i, j}}, {"grid", {grid_h, grid_w}}, {"layers", layers}};
}

}  // namespace consor
