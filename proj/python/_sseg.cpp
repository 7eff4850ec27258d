#include "sseg/assign.hpp"
#include "sseg/error.hpp"
#include "sseg/geom.hpp"
#include "sseg/metrics.hpp"
#include "sseg/nn/model.hpp"
#include "sseg/nn/pipeline.hpp"
#include "sseg/synthio.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace sseg;

namespace {

using Triple = std::array<double, 3>;
using BoxTuple = std::tuple<Triple, Triple, std::array<double, 4>>;

std::vector<Vec3> to_points(const std::vector<Triple>& pts) {
  std::vector<Vec3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p[0], p[1], p[2]);
  return out;
}

OrientedBox to_box(const BoxTuple& b) {
  const auto& [t, s, q] = b;
  return OrientedBox({t[0], t[1], t[2]}, {s[0], s[1], s[2]}, UnitQuaternion(q[0], q[1], q[2], q[3]));
}

BoxTuple from_box(const OrientedBox& b) {
  const auto& t = b.translation();
  const auto& s = b.scale();
  const auto& q = b.rotation();
  return {Triple{t.x(), t.y(), t.z()}, Triple{s.x(), s.y(), s.z()}, std::array<double, 4>{q.w(), q.x(), q.y(), q.z()}};
}

Hierarchy parse_hierarchy(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return hierarchy_from_json(j.contains("hierarchy") ? j.at("hierarchy") : j);
}

}  // namespace

PYBIND11_MODULE(_sseg, m) {
  m.doc() = "Native core of the sseg toolkit";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    } catch (const nlohmann::json::exception& e) {
      py::set_error(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "hungarian",
      [](const std::vector<std::vector<double>>& cost) {
        const auto rows = static_cast<Eigen::Index>(cost.size());
        const auto cols = rows > 0 ? static_cast<Eigen::Index>(cost.front().size()) : 0;
        CostMatrix c(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
          if (static_cast<Eigen::Index>(cost[static_cast<std::size_t>(i)].size()) != cols) {
            throw Error(ErrorKind::InvalidArgument, "ragged cost matrix");
          }
          for (Eigen::Index j = 0; j < cols; ++j) c(i, j) = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        const auto a = hungarian(c);
        return std::make_pair(a.pairs, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment: ([(row, col), ...], total cost).");

  m.def(
      "box_iou", [](const BoxTuple& a, const BoxTuple& b) { return box_iou(to_box(a), to_box(b)); }, py::arg("a"),
      py::arg("b"), "IoU of two boxes given as (t, s, q) with q = (w, x, y, z).");
  m.def(
      "pca_obb", [](const std::vector<Triple>& pts) { return from_box(pca_obb(to_points(pts))); }, py::arg("points"));
  m.def(
      "chamfer_sq",
      [](const std::vector<Triple>& a, const std::vector<Triple>& b) { return chamfer_sq(to_points(a), to_points(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "focal_loss", [](double p, int label, double alpha, double gamma) { return nn::focal_loss(p, label, alpha, gamma); },
      py::arg("score"), py::arg("label"), py::arg("alpha") = nn::kFocalAlpha, py::arg("gamma") = nn::kFocalGamma);
  m.def(
      "edge_error_from_counts",
      [](long tp, long pred_total, long gt_total) { return edge_error_from_counts({tp, pred_total, gt_total}); },
      py::arg("true_pos"), py::arg("pred_total"), py::arg("gt_total"));

  m.def(
      "gen_shape",
      [](const std::string& category, std::uint64_t seed, double oversegment_prob, double arm_prob,
         double boundary_noise, double outlier_fraction, std::size_t num_points) {
        NoiseConfig n;
        n.oversegment_prob = oversegment_prob;
        n.arm_prob = arm_prob;
        n.boundary_noise = boundary_noise;
        n.outlier_fraction = outlier_fraction;
        n.num_points = num_points;
        return record_to_json(gen_shape(category_from_string(category), seed, n)).dump();
      },
      py::arg("category"), py::arg("seed"), py::arg("oversegment_prob") = 0.0, py::arg("arm_prob") = 0.0,
      py::arg("boundary_noise") = NoiseConfig{}.boundary_noise,
      py::arg("outlier_fraction") = NoiseConfig{}.outlier_fraction, py::arg("num_points") = NoiseConfig{}.num_points,
      "Synthetic shape record as a JSON string.");

  m.def(
      "taxonomy", [](const std::string& category) { return category_taxonomy(category_from_string(category)).to_json().dump(); },
      py::arg("category"));

  m.def(
      "infer",
      [](const std::string& record, const std::string& model) {
        const ShapeRecord r = record_from_json(nlohmann::json::parse(record));
        const Taxonomy taxonomy = category_taxonomy(category_from_string(r.category));
        const Hierarchy skeleton = build_hierarchy(r.cloud.segments(), taxonomy, r.cloud.points);
        if (model.empty()) return hierarchy_to_json(nn::rule_based_structure(skeleton, r.cloud.points)).dump();
        const auto params = nn::load_checkpoint(model);
        return hierarchy_to_json(nn::infer_structure(params, skeleton, r.cloud.points)).dump();
      },
      py::arg("record"), py::arg("model") = "",
      "Hierarchy JSON for a normalized toy record; rule-based when no model path is given.");

  m.def(
      "part_ap", [](const std::string& pred, const std::string& gt) { return part_ap(parse_hierarchy(pred), parse_hierarchy(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "edge_error",
      [](const std::string& pred, const std::string& gt) { return edge_error(parse_hierarchy(pred), parse_hierarchy(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "structure_difference",
      [](const std::string& a, const std::string& b) { return structure_difference(parse_hierarchy(a), parse_hierarchy(b)); },
      py::arg("a"), py::arg("b"));
}
