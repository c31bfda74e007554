#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lidarsdf/errors.hpp"
#include "lidarsdf/io.hpp"

namespace lidarsdf {

using nlohmann::json;

namespace {

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

Eigen::MatrixXd from_row_major(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) throw FormatError("matrix payload has the wrong size");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return m;
}

json matrix_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", encode_doubles(row_major(m))}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  return from_row_major(decode_doubles(j.at("data").get<std::string>()), j.at("rows").get<Eigen::Index>(),
                        j.at("cols").get<Eigen::Index>());
}

Eigen::VectorXd vector_from(const json& j) {
  const Eigen::MatrixXd m = matrix_from(j);
  if (m.cols() != 1) throw FormatError("expected a column vector");
  return m.col(0);
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
}

void check_version(const json& doc) {
  if (!doc.contains("format_version") || doc.at("format_version") != kFormatVersion) {
    throw FormatError("unsupported or missing format_version");
  }
}

}  // namespace

std::string decoder_to_json(const SdfDecoder& decoder) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = decoder.kind();
  doc["d_z"] = decoder.latent_dim();
  json params;
  if (const auto* a = dynamic_cast<const AnalyticFamily*>(&decoder)) {
    params["base"] = std::vector<double>(a->base().begin(), a->base().end());
    params["map"] = matrix_json(a->map());
    params["anchored"] = a->anchored();
    params["contact_depth"] = a->contact_depth();
    if (a->has_natural_variation()) {
      params["natural_basis"] = matrix_json(a->natural_basis());
      params["natural_sigma"] = matrix_json(a->natural_sigma());
    }
  } else if (const auto* m = dynamic_cast<const MlpDecoder*>(&decoder)) {
    const auto& w = m->weights();
    params["hidden"] = m->hidden();
    params["w1"] = matrix_json(w.w1);
    params["b1"] = matrix_json(w.b1);
    params["w2"] = matrix_json(w.w2);
    params["b2"] = matrix_json(w.b2);
    params["w3"] = matrix_json(w.w3);
    params["b3"] = w.b3;
    if (std::isfinite(m->bounding_radius())) params["bounding_radius"] = m->bounding_radius();
  } else {
    throw InvalidArgument("cannot serialise decoder kind '" + decoder.kind() + "'");
  }
  doc["parameters"] = params;
  return doc.dump(2);
}

std::unique_ptr<SdfDecoder> decoder_from_json(const std::string& text) {
  const json doc = parse(text);
  check_version(doc);
  try {
    const std::string kind = doc.at("kind");
    const int d_z = doc.at("d_z");
    const json& p = doc.at("parameters");
    if (kind == "analytic") {
      const auto base_v = p.at("base").get<std::vector<double>>();
      if (base_v.size() != kShapeParamCount) throw FormatError("analytic base has the wrong length");
      ShapeParams base;
      std::copy(base_v.begin(), base_v.end(), base.begin());
      const Eigen::MatrixXd map = matrix_from(p.at("map"));
      if (map.rows() != kShapeParamCount || map.cols() != d_z) throw FormatError("analytic map has the wrong shape");
      auto family = std::make_unique<AnalyticFamily>(base, map, p.at("anchored").get<bool>(),
                                                     p.at("contact_depth").get<double>());
      if (p.contains("natural_basis")) {
        family->set_natural_variation(matrix_from(p.at("natural_basis")), vector_from(p.at("natural_sigma")));
      }
      return family;
    }
    if (kind == "mlp") {
      MlpDecoder::Weights w;
      w.w1 = matrix_from(p.at("w1"));
      w.b1 = vector_from(p.at("b1"));
      w.w2 = matrix_from(p.at("w2"));
      w.b2 = vector_from(p.at("b2"));
      w.w3 = vector_from(p.at("w3"));
      w.b3 = p.at("b3").get<double>();
      const double radius =
          p.contains("bounding_radius") ? p.at("bounding_radius").get<double>() : std::numeric_limits<double>::infinity();
      return std::make_unique<MlpDecoder>(d_z, std::move(w), radius);
    }
    throw FormatError("unknown decoder kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed decoder document: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed decoder document: ") + e.what());
  }
}

std::string pca_to_json(const PcaSubspace& pca) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = "pca";
  doc["d_z"] = pca.mean.size();
  doc["parameters"] = {{"mean", matrix_json(pca.mean)},
                       {"basis", matrix_json(pca.basis)},
                       {"variances", matrix_json(pca.variances)}};
  return doc.dump(2);
}

PcaSubspace pca_from_json(const std::string& text) {
  const json doc = parse(text);
  check_version(doc);
  try {
    if (doc.at("kind") != "pca") throw FormatError("document is not a PCA subspace");
    const json& p = doc.at("parameters");
    PcaSubspace pca;
    pca.mean = vector_from(p.at("mean"));
    pca.basis = matrix_from(p.at("basis"));
    pca.variances = vector_from(p.at("variances"));
    if (pca.basis.rows() != pca.mean.size()) throw FormatError("PCA basis does not match the mean");
    return pca;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed PCA document: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

}  // namespace lidarsdf
