#include "sseg/nn/model.hpp"

#include "sseg/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

namespace sseg::nn {

namespace {

constexpr std::size_t kPartHidden = 64;
constexpr std::size_t kCandidateHidden = 128;
// softplus(kUnitSoftplus) == 1, so a fresh scale head reproduces the extents.
constexpr double kUnitSoftplus = 0.5413248546129181;

bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0 && name[prefix.size()] == '.';
}

bool matches_any(const std::string& name, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return true;
  return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return has_prefix(name, p); });
}

}  // namespace

// --- ModelParams -------------------------------------------------------------

ModelParams ModelParams::initialize(std::size_t num_labels, std::uint64_t seed) {
  if (num_labels == 0) throw Error(ErrorKind::InvalidArgument, "model needs at least one label");
  ModelParams p;
  std::mt19937_64 rng(seed);
  auto add_linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({in, out});
    for (auto& v : w.storage()) v = dist(rng);
    p.tensors[name + ".w"] = std::move(w);
    p.tensors[name + ".b"] = Tensor({out});
  };
  const std::size_t x = kNodeWidth;
  add_linear("f_part.l1", 3, kPartHidden);
  add_linear("f_part.l2", kPartHidden, x);
  add_linear("f_part.out", x, x);
  add_linear("f_child", x, x);
  add_linear("f_ctx", 2 * x, x);
  add_linear("g_edge.l1", 2 * x, kEdgeWidth);
  add_linear("g_edge.l2", kEdgeWidth, kEdgeWidth);
  add_linear("g_tau", kEdgeWidth, 4);
  for (int t = 0; t < kMessageIterations; ++t) {
    add_linear("g_mp." + std::to_string(t) + ".msg", 2 * x + kEdgeWidth, x);
    add_linear("g_mp." + std::to_string(t) + ".upd", 2 * x, x);
  }
  add_linear("g_mp.out", kMessageIterations * x, x);
  add_linear("g_box.hidden", x, x);
  add_linear("g_box.offset", x, 3);
  add_linear("g_box.scale", x, 3);
  add_linear("g_box.rot", x, 4);
  add_linear("f_c.l1", 3 + num_labels, kCandidateHidden);
  add_linear("f_c.l2", kCandidateHidden, kCandidateWidth);
  add_linear("f_n", kCandidateWidth + x, kCandidateWidth);
  add_linear("f_m", 2 * kCandidateWidth, kCandidateWidth);
  add_linear("f_s", kCandidateWidth + x, kCandidateWidth);
  add_linear("g_m", kCandidateWidth, 1);

  // Box heads start at the rough estimate: no offset, unit scale, identity rotation.
  p.at("g_box.offset.w").fill(0.0);
  p.at("g_box.scale.w").fill(0.0);
  p.at("g_box.scale.b").fill(kUnitSoftplus);
  p.at("g_box.rot.w").fill(0.0);
  p.at("g_box.rot.b")[0] = 1.0;
  return p;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ModelParams::num_labels() const { return at("f_c.l1.w").rows() - 3; }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  for (const auto& [name, t] : tensors) z.tensors[name] = Tensor::zeros_like(t);
  return z;
}

void ModelParams::fill(double v) {
  for (auto& [_, t] : tensors) t.fill(v);
}

bool ModelParams::has_nonfinite() const {
  for (const auto& [_, t] : tensors) {
    for (double v : t.values()) {
      if (!std::isfinite(v)) return true;
    }
  }
  return false;
}

// --- Checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'S', 'E', 'G'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_bytes(std::istream& in, unsigned char* b, std::size_t n) {
  in.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint64_t get_uint(std::istream& in, int bytes, const char* what) {
  unsigned char b[8];
  if (!get_bytes(in, b, static_cast<std::size_t>(bytes))) {
    throw Error(ErrorKind::ParseError, std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, t] : params.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

ModelParams read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::ParseError, "not a checkpoint (bad magic)");
  }
  const auto version = get_uint(in, 4, "version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::ParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelParams p;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_uint(in, 4, "name length");
    if (len > 4096) throw Error(ErrorKind::ParseError, "checkpoint name length " + std::to_string(len));
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::uint64_t>(in.gcount()) != len) throw Error(ErrorKind::ParseError, "checkpoint truncated in name");
    const auto rank = get_uint(in, 4, "rank");
    if (rank < 1 || rank > 2) throw Error(ErrorKind::ParseError, "tensor '" + name + "' has rank " + std::to_string(rank));
    std::vector<std::size_t> shape;
    std::size_t count = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<std::size_t>(get_uint(in, 8, "dims")));
      count *= shape.back();
    }
    if (count > (std::size_t{1} << 28)) throw Error(ErrorKind::ParseError, "tensor '" + name + "' is implausibly large");
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(get_uint(in, 8, "payload"));
    p.tensors[name] = Tensor(std::move(shape), std::move(data));
  }
  return p;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  write_checkpoint(out, params);
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return read_checkpoint(in);
}

// --- Graph -------------------------------------------------------------------

Graph::Graph(const ModelParams& params, ModelParams* grads, std::vector<std::string> trainable)
    : params_(params), grads_(grads), trainable_(std::move(trainable)) {}

Var Graph::param(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const Tensor& value = params_.at(name);
  Var v = (grads_ && matches_any(name, trainable_)) ? tape.parameter(value, &grads_->at(name))
                                                    : tape.reference(value);
  bound_.emplace(name, v);
  return v;
}

Tensor points_tensor(std::span<const Vec3> points) {
  Tensor t({points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int k = 0; k < 3; ++k) t.at(i, static_cast<std::size_t>(k)) = points[i][k];
  }
  return t;
}

// --- Structure networks ------------------------------------------------------

Var encode_part(Graph& g, Var points) {
  const Tensor& pv = points.value();
  if (pv.size() == 0) throw Error(ErrorKind::EmptyPointSet, "encode_part: no points");
  if (pv.cols() != 3) throw Error(ErrorKind::InvalidArgument, "encode_part: expected k x 3 points");
  Var h = relu(g.dense("f_part.l1", points));
  h = relu(g.dense("f_part.l2", h));
  return g.dense("f_part.out", max_rows(h));
}

Var aggregate_children(Graph& g, const std::vector<Var>& children) {
  if (children.empty()) throw Error(ErrorKind::InvalidArgument, "aggregate_children: no children");
  return g.dense("f_child", max_of(children));
}

Var inject_parent_context(Graph& g, Var child, Var parent) { return g.dense("f_ctx", concat({child, parent})); }

RelationOutput classify_relations(Graph& g, Var xi, Var xj) {
  Var y = relu(g.dense("g_edge.l1", concat({xi, xj})));
  y = relu(g.dense("g_edge.l2", y));
  return {sigmoid(g.dense("g_tau", y)), y};
}

bool edge_kept(const Tensor& probs) {
  return std::any_of(probs.values().begin(), probs.values().end(), [](double p) { return p > kEdgeKeepThreshold; });
}

std::vector<Var> message_pass(Graph& g, const std::vector<Var>& feats, const std::vector<KeptEdge>& edges) {
  const std::size_t n = feats.size();
  for (const auto& e : edges) {
    if (e.i >= n || e.j >= n || e.i == e.j) throw Error(ErrorKind::InvalidArgument, "message_pass: bad edge");
  }
  const Tensor zero({kNodeWidth});
  std::vector<Var> x = feats;
  std::vector<std::vector<Var>> per_iteration;
  for (int t = 0; t < kMessageIterations; ++t) {
    const std::string layer = "g_mp." + std::to_string(t);
    std::vector<std::vector<Var>> inbox(n);
    for (const auto& e : edges) {
      inbox[e.i].push_back(g.dense(layer + ".msg", concat({x[e.i], x[e.j], e.edge})));
      inbox[e.j].push_back(g.dense(layer + ".msg", concat({x[e.j], x[e.i], e.edge})));
    }
    std::vector<Var> next;
    for (std::size_t i = 0; i < n; ++i) {
      Var m = inbox[i].empty() ? g.constant(zero) : max_of(inbox[i]);
      next.push_back(relu(g.dense(layer + ".upd", concat({x[i], m}))));
    }
    per_iteration.push_back(next);
    x = std::move(next);
  }
  std::vector<Var> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Var> parts;
    for (const auto& it : per_iteration) parts.push_back(it[i]);
    out.push_back(g.dense("g_mp.out", concat(parts)));
  }
  return out;
}

OrientedBox BoxVars::box() const {
  const Tensor& tv = t.value();
  const Tensor& sv = s.value();
  const Tensor& qv = q.value();
  return OrientedBox(Vec3(tv[0], tv[1], tv[2]), Vec3(sv[0], sv[1], sv[2]), UnitQuaternion(qv[0], qv[1], qv[2], qv[3]));
}

BoxVars decode_box(Graph& g, Var x, std::span<const Vec3> points, double shape_diagonal) {
  if (points.empty()) throw Error(ErrorKind::EmptyPointSet, "decode_box: no points");
  Var h = relu(g.dense("g_box.hidden", x));
  const auto inliers = inlier_points(points);
  const Vec3 c = centroid(inliers);
  Var offset = scale(tanh(g.dense("g_box.offset", h)), kOffsetFraction * shape_diagonal);
  Var t = add(g.constant(Tensor::vector({c.x(), c.y(), c.z()})), offset);
  Var q = normalize(g.dense("g_box.rot", h), Tensor::vector({1.0, 0.0, 0.0, 0.0}));
  Var r = quat_to_matrix(q);
  Mat3 axes;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) axes(i, j) = r.value().at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  // ext_k = r_k . (p_hi(k) - p_lo(k)) with the order statistics held fixed.
  const auto ex = axis_extremes(inliers, axes);
  Tensor span({3, 3});
  for (std::size_t k = 0; k < 3; ++k) {
    const Vec3 d = inliers[ex.hi[k]] - inliers[ex.lo[k]];
    for (std::size_t i = 0; i < 3; ++i) span.at(i, k) = d[static_cast<int>(i)];
  }
  Var ext = matmul(g.constant(Tensor::vector({1.0, 1.0, 1.0})), mul(r, g.constant(span)));
  ext = clamp(ext, kExtentFloor, std::numeric_limits<double>::infinity());
  Var s = mul(softplus(g.dense("g_box.scale", h)), ext);
  return {t, s, q, r};
}

// --- Refinement networks -----------------------------------------------------

Var encode_candidate(Graph& g, std::span<const Vec3> points, int label) {
  if (points.empty()) throw Error(ErrorKind::EmptyPointSet, "encode_candidate: no points");
  const std::size_t labels = g.params().num_labels();
  if (label < 0 || static_cast<std::size_t>(label) >= labels) {
    throw Error(ErrorKind::UnknownLabel, "encode_candidate: label " + std::to_string(label) + " outside the model");
  }
  Tensor in({points.size(), 3 + labels});
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int k = 0; k < 3; ++k) in.at(i, static_cast<std::size_t>(k)) = points[i][k];
    in.at(i, 3 + static_cast<std::size_t>(label)) = 1.0;
  }
  Var h = relu(g.dense("f_c.l1", g.constant(std::move(in))));
  h = relu(g.dense("f_c.l2", h));
  return max_rows(h);
}

Var fuse_node_feature(Graph& g, Var c, Var x) { return relu(g.dense("f_n", concat({c, x}))); }

Var build_merge_feature(Graph& g, Var ci, Var cj) { return relu(g.dense("f_m", concat({ci, cj}))); }

Var fuse_structure_code(Graph& g, Var m, Var x_root) { return relu(g.dense("f_s", concat({m, x_root}))); }

Var predict_merge(Graph& g, Var m_tilde) { return sigmoid(g.dense("g_m", m_tilde)); }

// --- Losses ------------------------------------------------------------------

namespace {

Tensor local_signs() {
  Tensor s({8, 3});
  for (std::size_t c = 0; c < 8; ++c) {
    s.at(c, 0) = (c & 1) ? 0.5 : -0.5;
    s.at(c, 1) = (c & 2) ? 0.5 : -0.5;
    s.at(c, 2) = (c & 4) ? 0.5 : -0.5;
  }
  return s;
}

Tensor matrix_tensor(const Mat3& m) {
  Tensor t({3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) t.at(i, j) = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return t;
}

void check_probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::InvalidProbability, "probability " + std::to_string(p) + " outside [0, 1]");
  }
}

void check_label(int label) {
  if (label != 0 && label != 1) throw Error(ErrorKind::InvalidArgument, "label must be 0 or 1");
}

}  // namespace

Var box_loss(Graph& g, const BoxVars& pred, const OrientedBox& gt) {
  Var local = mul_row(g.constant(local_signs()), pred.s);
  Var corners = add_row(matmul(local, transpose(pred.r)), pred.t);
  const Mat3 rt = gt.rotation().matrix().transpose();
  const Vec3 half = 0.5 * gt.scale();
  const Mat3 r = gt.rotation().matrix();
  Tensor target({8, 3});
  const Tensor& cv = corners.value();
  for (std::size_t c = 0; c < 8; ++c) {
    const Vec3 p(cv.at(c, 0), cv.at(c, 1), cv.at(c, 2));
    const Vec3 l = rt * (p - gt.translation());
    const Vec3 nearest(l.x() < 0.0 ? -half.x() : half.x(), l.y() < 0.0 ? -half.y() : half.y(),
                       l.z() < 0.0 ? -half.z() : half.z());
    const Vec3 w = gt.translation() + r * nearest;
    for (int k = 0; k < 3; ++k) target.at(c, static_cast<std::size_t>(k)) = w[k];
  }
  return scale(sum(square(sub(corners, g.constant(std::move(target))))), 1.0 / 8.0);
}

Var norm_loss(Graph& g, const BoxVars& pred, const OrientedBox& gt) {
  Var dots = matmul(transpose(pred.r), g.constant(matrix_tensor(gt.rotation().matrix())));
  Var best = max_rows(transpose(abs(dots)));
  return add_scalar(scale(sum(best), -1.0), 3.0);
}

Var edge_loss(Graph& g, Var probs, const Tensor& labels) {
  const Tensor& pv = probs.value();
  if (pv.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "edge_loss: label count mismatch");
  if (pv.size() == 0) return g.constant(Tensor::vector({0.0}));
  for (double v : pv.values()) check_probability(v);
  Tensor inv = labels;
  for (auto& v : inv.storage()) v = 1.0 - v;
  Var p = clamp(probs, kProbabilityClamp, 1.0 - kProbabilityClamp);
  Var pos = mul(g.constant(labels), log(p));
  Var neg = mul(g.constant(std::move(inv)), log(add_scalar(scale(p, -1.0), 1.0)));
  return scale(mean(add(pos, neg)), -1.0);
}

Var total_loss(Var box, Var norm, Var edge) {
  return add(add(scale(box, kBoxWeight), scale(norm, kNormWeight)), edge);
}

double box_loss(const OrientedBox& pred, const OrientedBox& gt) {
  const Mat3 rt = gt.rotation().matrix().transpose();
  const Vec3 half = 0.5 * gt.scale();
  double total = 0.0;
  for (const auto& p : pred.corners()) {
    const Vec3 l = rt * (p - gt.translation());
    const Vec3 nearest(l.x() < 0.0 ? -half.x() : half.x(), l.y() < 0.0 ? -half.y() : half.y(),
                       l.z() < 0.0 ? -half.z() : half.z());
    total += (l - nearest).squaredNorm();
  }
  return total / 8.0;
}

double norm_loss(const OrientedBox& pred, const OrientedBox& gt) {
  const Mat3 d = pred.rotation().matrix().transpose() * gt.rotation().matrix();
  double total = 0.0;
  for (int k = 0; k < 3; ++k) total += 1.0 - d.row(k).cwiseAbs().maxCoeff();
  return total;
}

double edge_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "edge_loss: label count mismatch");
  if (probs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    check_probability(probs[i]);
    const double p = std::clamp(probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.size());
}

double focal_loss(double score, int label, double alpha, double gamma) {
  check_probability(score);
  check_label(label);
  const double p = std::clamp(score, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double pt = label == 1 ? p : 1.0 - p;
  const double at = label == 1 ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

Var focal_loss(Var score, int label, double alpha, double gamma) {
  if (score.value().size() != 1) throw Error(ErrorKind::InvalidArgument, "focal_loss: expected a scalar score");
  check_probability(score.item());
  check_label(label);
  Var p = clamp(score, kProbabilityClamp, 1.0 - kProbabilityClamp);
  Var pt = label == 1 ? p : add_scalar(scale(p, -1.0), 1.0);
  const double at = label == 1 ? alpha : 1.0 - alpha;
  Var weight = pow(add_scalar(scale(pt, -1.0), 1.0), gamma);
  return scale(mul(weight, log(pt)), -at);
}

double merge_loss(std::span<const double> scores, std::span<const int> labels, double alpha, double gamma) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "merge_loss: label count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) total += focal_loss(scores[i], labels[i], alpha, gamma);
  return total;
}

Var merge_loss(Graph& g, const std::vector<Var>& scores, std::span<const int> labels, double alpha, double gamma) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "merge_loss: label count mismatch");
  if (scores.empty()) return g.constant(Tensor::vector({0.0}));
  std::vector<Var> terms;
  for (std::size_t i = 0; i < scores.size(); ++i) terms.push_back(focal_loss(scores[i], labels[i], alpha, gamma));
  return sum(concat(terms));
}

// --- Optimizer ---------------------------------------------------------------

OptimState::OptimState(const ModelParams& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

double OptimState::current_rate() const {
  return config_.learning_rate * std::pow(config_.decay, static_cast<double>(steps_ / config_.decay_every));
}

void OptimState::step(ModelParams& params, const ModelParams& grads, double grad_scale,
                      const std::vector<std::string>& prefixes) {
  const double lr = current_rate();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, p] : params.tensors) {
    if (!matches_any(name, prefixes)) continue;
    const Tensor& gr = grads.at(name);
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gr[i] * grad_scale;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
}

const std::vector<std::string>& structure_prefixes() {
  static const std::vector<std::string> names{"f_part", "f_child", "f_ctx", "g_edge", "g_tau", "g_mp", "g_box"};
  return names;
}

const std::vector<std::string>& refinement_prefixes() {
  static const std::vector<std::string> names{"f_c", "f_n", "f_m", "f_s", "g_m"};
  return names;
}

}  // namespace sseg::nn
