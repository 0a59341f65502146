#include "fmdiff/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace fmdiff {

// ---------------------------------------------------------------------------
// ForwardModel

Tensor ForwardModel::assemble(const Tensor& predicted, const Tensor&, std::span<const Phi>) const {
  if (predicted.rank() != 2 || predicted.dim(1) != predicted_size()) {
    throw ShapeError(name() + ": prediction shape " + to_string(predicted.shape()) + " vs predicted size " +
                     std::to_string(predicted_size()));
  }
  return predicted;
}

Index ForwardModel::batch_observation_size(std::span<const Phi> phis) const {
  if (phis.empty()) return 0;
  const Index n = observation_size(phis[0]);
  for (const auto& p : phis) {
    if (observation_size(p) != n) throw ShapeError(name() + ": parameters in one batch give different observation sizes");
  }
  return n;
}

void ForwardModel::check_signals(const Tensor& signals, std::span<const Phi> phis) const {
  if (signals.rank() != 2 || signals.dim(1) != signal_size() || signals.dim(0) != static_cast<Index>(phis.size())) {
    throw ShapeError(name() + ": signals " + to_string(signals.shape()) + " vs expected [" +
                     std::to_string(phis.size()) + ", " + std::to_string(signal_size()) + "]");
  }
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.numel() != x.dim(0)) throw ShapeError("scale_rows: " + to_string(x.shape()) + " vs " + to_string(w.shape()));
  return transpose(mul(transpose(x), reshape(w, {1, x.dim(0)})));
}

// ---------------------------------------------------------------------------
// Render

Phi CameraPose::to_phi() const { return Eigen::Vector2d(angle, offset); }

CameraPose CameraPose::from_phi(const Phi& phi) {
  if (phi.size() != 2) throw std::invalid_argument("camera pose needs 2 parameters");
  return {phi[0], phi[1]};
}

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

ToyScene ToyScene::from_decoded(Index h, Index w, const Eigen::ArrayXd& density, const Eigen::ArrayXXd& colors) {
  if (density.size() != h * w || colors.rows() != h * w || colors.cols() != 3) {
    throw ShapeError("ToyScene::from_decoded: expected " + std::to_string(h * w) + " cells");
  }
  ToyScene s{h, w, Eigen::ArrayXd(h * w * 4)};
  for (Index i = 0; i < h * w; ++i) {
    s.raw[i * 4] = inverse_softplus(density[i]);
    for (int c = 0; c < 3; ++c) s.raw[i * 4 + 1 + c] = logit(colors(i, c));
  }
  return s;
}

double ToyScene::density(Index r, Index c) const {
  const double x = raw[(r * w + c) * 4];
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Eigen::Array3d ToyScene::color(Index r, Index c) const {
  Eigen::Array3d out;
  for (int k = 0; k < 3; ++k) out[k] = 1.0 / (1.0 + std::exp(-raw[(r * w + c) * 4 + 1 + k]));
  return out;
}

RenderModel::RenderModel(RenderConfig config) : config_(config) {
  if (config_.grid_h < 1 || config_.grid_w < 1 || config_.image_width < 1) throw std::invalid_argument("empty render grid or image");
  if (config_.n_samples < 1) throw std::invalid_argument("render needs n_samples >= 1");
}

Eigen::VectorXd RenderModel::encode_phi(const Phi& phi) const {
  const auto pose = CameraPose::from_phi(phi);
  return Eigen::Vector3d(std::sin(pose.angle), std::cos(pose.angle), pose.offset);
}

namespace {

struct Lerp {
  Index lo;
  Index hi;
  double frac;
};

// Cell-centred linear interpolation coordinate along one axis of the box.
Lerp lerp_axis(double x, Index cells) {
  if (cells == 1) return {0, 0, 0.0};
  double u = (x + 1.0) * static_cast<double>(cells) / 2.0 - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(cells - 1));
  const Index lo = std::min<Index>(static_cast<Index>(std::floor(u)), cells - 2);
  return {lo, lo + 1, u - static_cast<double>(lo)};
}

} // namespace

RaySamples RenderModel::trace(const CameraPose& pose) const {
  const Index pix = config_.image_width;
  const int ns = config_.n_samples;
  RaySamples rs;
  rs.pixels = pix;
  rs.n_samples = ns;
  rs.cell.assign(pix * ns, {0, 0, 0, 0});
  rs.weight.assign(pix * ns, {0.0, 0.0, 0.0, 0.0});
  rs.delta = Eigen::ArrayXd::Zero(pix);

  const Eigen::Vector2d dir(std::cos(pose.angle), std::sin(pose.angle));
  const Eigen::Vector2d side(-std::sin(pose.angle), std::cos(pose.angle));
  for (Index p = 0; p < pix; ++p) {
    const double lateral = pose.offset + config_.extent * (2.0 * (static_cast<double>(p) + 0.5) / static_cast<double>(pix) - 1.0);
    const Eigen::Vector2d origin = lateral * side;
    double s_near = -std::numeric_limits<double>::infinity();
    double s_far = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 2; ++a) {
      if (std::abs(dir[a]) < 1e-12) {
        if (std::abs(origin[a]) > 1.0) miss = true;
        continue;
      }
      const double t1 = (-1.0 - origin[a]) / dir[a];
      const double t2 = (1.0 - origin[a]) / dir[a];
      s_near = std::max(s_near, std::min(t1, t2));
      s_far = std::min(s_far, std::max(t1, t2));
    }
    if (miss || !(s_far - s_near > 1e-12)) continue;

    const double delta = (s_far - s_near) / ns;
    rs.delta[p] = delta;
    for (int i = 0; i < ns; ++i) {
      const Eigen::Vector2d x = origin + (s_near + (i + 0.5) * delta) * dir;
      const Lerp cu = lerp_axis(x[0], config_.grid_w);
      const Lerp rv = lerp_axis(x[1], config_.grid_h);
      const Index k = p * ns + i;
      const Index w = config_.grid_w;
      rs.cell[k] = {rv.lo * w + cu.lo, rv.lo * w + cu.hi, rv.hi * w + cu.lo, rv.hi * w + cu.hi};
      rs.weight[k] = {(1 - rv.frac) * (1 - cu.frac), (1 - rv.frac) * cu.frac, rv.frac * (1 - cu.frac), rv.frac * cu.frac};
    }
  }
  return rs;
}

Tensor RenderModel::composite(const Tensor& sigma, const Tensor& attrs, std::span<const Phi> phis) const {
  const Index batch = static_cast<Index>(phis.size());
  const Index pix = config_.image_width;
  const Index ns = config_.n_samples;
  const Index rays = batch * pix;
  const Index points = rays * ns;
  const Index channels = attrs.dim(1);

  std::array<std::vector<Index>, 4> idx;
  std::array<Eigen::ArrayXd, 4> wts;
  for (auto& v : idx) v.resize(points);
  for (auto& w : wts) w.resize(points);
  Eigen::ArrayXd delta(points);
  for (Index b = 0; b < batch; ++b) {
    const RaySamples rs = trace(CameraPose::from_phi(phis[b]));
    for (Index k = 0; k < pix * ns; ++k) {
      const Index g = b * pix * ns + k;
      for (int c = 0; c < 4; ++c) {
        idx[c][g] = b * cells() + rs.cell[k][c];
        wts[c][g] = rs.weight[k][c];
      }
      delta[g] = rs.delta[k / ns];
    }
  }

  const Tensor table = concat({sigma, attrs}, 1);
  Tensor interp;
  for (int c = 0; c < 4; ++c) {
    Tensor term = scale_rows(gather(table, idx[c]), Tensor({points}, wts[c]));
    interp = c == 0 ? term : add(interp, term);
  }

  const Tensor tau = mul(reshape(slice(interp, 1, 0, 1), {rays, ns}), Tensor({rays, ns}, delta));
  const Tensor transmittance = exp(neg(sub(cumsum(tau), tau)));
  const Tensor alpha = shift(neg(exp(neg(tau))), 1.0);
  const Tensor weights = mul(transmittance, alpha);
  const Tensor weighted = scale_rows(slice(interp, 1, 1, 1 + channels), reshape(weights, {points}));
  return sum(reshape(weighted, {rays, ns, channels}), 1);
}

Tensor RenderModel::apply(const Tensor& signals, std::span<const Phi> phis) const {
  check_signals(signals, phis);
  const Index batch = signals.dim(0);
  const Tensor cellsv = reshape(signals, {batch * cells(), 4});
  const Tensor sigma = softplus(slice(cellsv, 1, 0, 1));
  const Tensor colors = sigmoid(slice(cellsv, 1, 1, 4));
  return reshape(composite(sigma, colors, phis), {batch, config_.image_width * 3});
}

RenderModel::Rendered RenderModel::render_with_features(const Tensor& signals, const Tensor& features,
                                                        std::span<const Phi> phis) const {
  check_signals(signals, phis);
  const Index batch = signals.dim(0);
  if (features.rank() != 2 || features.dim(0) != batch || features.dim(1) % cells() != 0) {
    throw ShapeError("render_with_features: features " + to_string(features.shape()) + " for " + std::to_string(cells()) + " cells");
  }
  const Index k = features.dim(1) / cells();
  const Tensor cellsv = reshape(signals, {batch * cells(), 4});
  const Tensor sigma = softplus(slice(cellsv, 1, 0, 1));
  const Tensor colors = sigmoid(slice(cellsv, 1, 1, 4));
  const Tensor attrs = concat({colors, reshape(features, {batch * cells(), k})}, 1);
  const Tensor out = composite(sigma, attrs, phis);
  return {reshape(slice(out, 1, 0, 3), {batch, config_.image_width * 3}),
          reshape(slice(out, 1, 3, 3 + k), {batch, config_.image_width * k})};
}

Eigen::ArrayXXd render(const RenderModel& model, const ToyScene& scene, const CameraPose& pose) {
  const std::vector<Phi> phis{pose.to_phi()};
  const Tensor img = model.apply(scene.as_batch(), phis);
  Eigen::ArrayXXd out(model.config().image_width, 3);
  for (Index p = 0; p < out.rows(); ++p)
    for (int c = 0; c < 3; ++c) out(p, c) = img[p * 3 + c];
  return out;
}

// ---------------------------------------------------------------------------
// Warp

Tensor MotionSignal::as_batch() const {
  const Index w = motion.size();
  Eigen::ArrayXd d(w * 4);
  for (Index u = 0; u < w; ++u)
    for (int c = 0; c < 3; ++c) d[u * 3 + c] = color(u, c);
  d.tail(w) = motion;
  return Tensor({1, w * 4}, std::move(d));
}

std::array<SplatTap, 2> splat_taps(double x) {
  const double k = std::floor(x);
  const double f = x - k;
  return {SplatTap{static_cast<Index>(k), 1.0 - f}, SplatTap{static_cast<Index>(k) + 1, f}};
}

Tensor WarpModel::apply(const Tensor& signals, std::span<const Phi> phis) const {
  check_signals(signals, phis);
  const Index batch = signals.dim(0);
  const Index w = width_;
  const Index n = batch * w;
  const Tensor colors = reshape(slice(signals, 1, 0, w * 3), {n, 3});
  const Tensor motion = reshape(slice(signals, 1, w * 3, w * 4), {n});

  Eigen::ArrayXd origin(n), scale_by(n);
  for (Index b = 0; b < batch; ++b) {
    if (phis[b].size() != 1) throw std::invalid_argument("warp phi must be a scalar");
    for (Index u = 0; u < w; ++u) {
      origin[b * w + u] = static_cast<double>(u);
      scale_by[b * w + u] = phis[b][0];
    }
  }
  const Tensor dest = add(Tensor({n}, origin), mul(motion, Tensor({n}, scale_by)));
  Eigen::ArrayXd base = dest.data().floor();
  const Tensor frac = reshape(sub(dest, Tensor({n}, base)), {n, 1});
  const std::array<Tensor, 2> tap_weight{shift(neg(frac), 1.0), frac};

  Tensor num = Tensor::zeros({n, 3});
  Tensor den = Tensor::zeros({n, 1});
  for (int t = 0; t < 2; ++t) {
    std::vector<Index> src, dst;
    for (Index b = 0; b < batch; ++b) {
      for (Index u = 0; u < w; ++u) {
        const Index d = static_cast<Index>(base[b * w + u]) + t;
        if (d < 0 || d >= w) continue;
        src.push_back(b * w + u);
        dst.push_back(b * w + d);
      }
    }
    if (src.empty()) continue;
    const Tensor wt = gather(tap_weight[t], src);
    num = scatter_add(num, dst, scale_rows(gather(colors, src), wt));
    den = scatter_add(den, dst, wt);
  }
  // Destinations nobody reached keep a zero numerator; flooring the
  // denominator at epsilon leaves covered pixels exactly normalized.
  const Eigen::ArrayXd floor_eps = (den.data() < kEpsilon).cast<double>() * kEpsilon;
  const Tensor inv = div(Tensor::full({n, 1}, 1.0), add(den, Tensor({n, 1}, floor_eps)));
  return reshape(scale_rows(num, inv), {batch, w * 3});
}

Tensor WarpModel::assemble(const Tensor& predicted, const Tensor& ctxt_obs, std::span<const Phi> ctxt_phis) const {
  ForwardModel::assemble(predicted, ctxt_obs, ctxt_phis);
  for (const auto& p : ctxt_phis) {
    if (p.size() != 1 || p[0] != 0.0) throw std::invalid_argument("warp assembly needs context frames at phi = 0");
  }
  return concat({ctxt_obs, predicted}, 1);
}

Eigen::ArrayXXd warp(const WarpModel& model, const MotionSignal& signal, double phi) {
  const std::vector<Phi> phis{Phi::Constant(1, phi)};
  const Tensor img = model.apply(signal.as_batch(), phis);
  Eigen::ArrayXXd out(model.width(), 3);
  for (Index p = 0; p < out.rows(); ++p)
    for (int c = 0; c < 3; ++c) out(p, c) = img[p * 3 + c];
  return out;
}

// ---------------------------------------------------------------------------
// Generator

Phi PatchCoords::to_phi() const {
  Phi p(4);
  p << static_cast<double>(row), static_cast<double>(col), static_cast<double>(height), static_cast<double>(width);
  return p;
}

PatchCoords PatchCoords::from_phi(const Phi& phi) {
  if (phi.size() != 4) throw std::invalid_argument("patch coordinates need 4 parameters");
  return {static_cast<Index>(std::lround(phi[0])), static_cast<Index>(std::lround(phi[1])),
          static_cast<Index>(std::lround(phi[2])), static_cast<Index>(std::lround(phi[3]))};
}

GeneratorModel::GeneratorModel(GeneratorConfig config) : config_(config) {
  Rng rng(config_.seed);
  const Index out = config_.image_h * config_.image_w * 3;
  const double g1 = 1.5 / std::sqrt(static_cast<double>(config_.latent_dim));
  const double g2 = 2.0 / std::sqrt(static_cast<double>(config_.hidden));
  w1_ = Tensor::matrix(rng.normal_matrix(config_.latent_dim, config_.hidden) * g1);
  b1_ = Tensor::matrix(rng.normal_matrix(1, config_.hidden) * 0.1);
  w2_ = Tensor::matrix(rng.normal_matrix(config_.hidden, out) * g2);
  b2_ = Tensor::matrix(rng.normal_matrix(1, out) * 0.1);
}

Index GeneratorModel::observation_size(const Phi& phi) const {
  const auto p = PatchCoords::from_phi(phi);
  if (p.row < 0 || p.col < 0 || p.height < 1 || p.width < 1 || p.row + p.height > config_.image_h ||
      p.col + p.width > config_.image_w) {
    throw std::out_of_range("patch out of bounds");
  }
  return p.height * p.width * 3;
}

Eigen::VectorXd GeneratorModel::encode_phi(const Phi& phi) const {
  const auto p = PatchCoords::from_phi(phi);
  const double h = static_cast<double>(config_.image_h), w = static_cast<double>(config_.image_w);
  return Eigen::Vector4d(p.row / h, p.col / w, p.height / h, p.width / w);
}

Tensor GeneratorModel::generate(const Tensor& signals) const {
  const Tensor hidden = tanh(add(matmul(signals, w1_), b1_));
  return sigmoid(add(matmul(hidden, w2_), b2_));
}

Tensor GeneratorModel::apply(const Tensor& signals, std::span<const Phi> phis) const {
  check_signals(signals, phis);
  const Index obs = batch_observation_size(phis);
  const Index batch = signals.dim(0);
  const Index hw = config_.image_h * config_.image_w;
  std::vector<Index> idx;
  idx.reserve(batch * obs / 3);
  for (Index b = 0; b < batch; ++b) {
    const auto p = PatchCoords::from_phi(phis[b]);
    for (Index i = 0; i < p.height; ++i)
      for (Index j = 0; j < p.width; ++j) idx.push_back(b * hw + (p.row + i) * config_.image_w + p.col + j);
  }
  const Tensor pixels = reshape(generate(signals), {batch * hw, 3});
  return reshape(gather(pixels, idx), {batch, obs});
}

// ---------------------------------------------------------------------------
// Linear

Tensor linear_map(const Tensor& s, const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  if (b.size() != a.rows()) throw ShapeError("linear_map: offset size " + std::to_string(b.size()) + " vs " + std::to_string(a.rows()) + " rows");
  if (s.rank() == 1) {
    if (s.dim(0) != a.cols()) throw ShapeError("linear_map: signal " + to_string(s.shape()) + " vs matrix [" + std::to_string(a.rows()) + ", " + std::to_string(a.cols()) + "]");
    return reshape(linear_map(reshape(s, {1, s.dim(0)}), a, b), {a.rows()});
  }
  if (s.rank() != 2 || s.dim(1) != a.cols()) {
    throw ShapeError("linear_map: signal " + to_string(s.shape()) + " vs matrix [" + std::to_string(a.rows()) + ", " + std::to_string(a.cols()) + "]");
  }
  const Eigen::MatrixXd at = a.transpose();
  return add(matmul(s, Tensor::matrix(at)), Tensor::matrix(b.transpose()));
}

LinearModel::LinearModel(std::vector<Eigen::MatrixXd> operators, std::vector<Eigen::VectorXd> offsets, bool project_context)
    : ops_(std::move(operators)), offsets_(std::move(offsets)), project_context_(project_context) {
  if (ops_.empty()) throw std::invalid_argument("linear model needs at least one operator");
  dim_ = ops_[0].cols();
  for (const auto& a : ops_) {
    if (a.cols() != dim_ || a.rows() != ops_[0].rows()) throw ShapeError("linear model operators must share one shape");
  }
  if (offsets_.empty()) offsets_.assign(ops_.size(), Eigen::VectorXd::Zero(ops_[0].rows()));
  if (offsets_.size() != ops_.size()) throw std::invalid_argument("one offset per operator required");
  for (const auto& b : offsets_) {
    if (b.size() != ops_[0].rows()) throw ShapeError("linear model offset size mismatch");
  }
}

Index LinearModel::index_of(const Phi& phi) const {
  if (phi.size() != 1) throw std::invalid_argument("linear model phi is a single operator index");
  const auto k = static_cast<Index>(std::lround(phi[0]));
  if (k < 0 || k >= num_operators()) throw std::out_of_range("operator index " + std::to_string(k) + " out of range");
  return k;
}

Index LinearModel::observation_size(const Phi& phi) const { return ops_[index_of(phi)].rows(); }

Index LinearModel::encoded_phi_size() const { return ops_[0].size() + ops_[0].rows(); }

Eigen::VectorXd LinearModel::encode_phi(const Phi& phi) const {
  const Index k = index_of(phi);
  Eigen::VectorXd e(encoded_phi_size());
  const RowMatrixXd a = ops_[k];
  e.head(a.size()) = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
  e.tail(offsets_[k].size()) = offsets_[k];
  return e;
}

namespace {
std::map<Index, std::vector<Index>> group_rows(std::span<const Phi> phis, auto&& index_of) {
  std::map<Index, std::vector<Index>> groups;
  for (std::size_t i = 0; i < phis.size(); ++i) groups[index_of(phis[i])].push_back(static_cast<Index>(i));
  return groups;
}
} // namespace

Tensor LinearModel::apply(const Tensor& signals, std::span<const Phi> phis) const {
  check_signals(signals, phis);
  const Index obs = batch_observation_size(phis);
  Tensor out = Tensor::zeros({signals.dim(0), obs});
  for (const auto& [k, rows] : group_rows(phis, [this](const Phi& p) { return index_of(p); })) {
    out = scatter_add(out, rows, linear_map(gather(signals, rows), ops_[k], offsets_[k]));
  }
  return out;
}

Tensor LinearModel::assemble(const Tensor& predicted, const Tensor& ctxt_obs, std::span<const Phi> ctxt_phis) const {
  ForwardModel::assemble(predicted, ctxt_obs, ctxt_phis);
  if (!project_context_) return predicted;
  Tensor out = Tensor::zeros(predicted.shape());
  for (const auto& [k, rows] : group_rows(ctxt_phis, [this](const Phi& p) { return index_of(p); })) {
    const Eigen::MatrixXd& a = ops_[k];
    const Eigen::MatrixXd gram = a * a.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) throw std::invalid_argument("context operator is rank deficient");
    const Eigen::MatrixXd pinv = a.transpose() * ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.rows()));
    const Eigen::MatrixXd keep = Eigen::MatrixXd::Identity(dim_, dim_) - pinv * a;
    const Tensor s = gather(predicted, rows);
    const Tensor o = gather(ctxt_obs, rows);
    const Eigen::MatrixXd keep_t = keep.transpose();
    const Tensor proj = add(matmul(s, Tensor::matrix(keep_t)), linear_map(o, pinv, -pinv * offsets_[k]));
    out = scatter_add(out, rows, proj);
  }
  return out;
}

} // namespace fmdiff
