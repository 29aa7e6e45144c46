#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwf/core/error.hpp"
#include "dwf/mask.hpp"
#include "dwf/metrics.hpp"
#include "dwf/model.hpp"
#include "dwf/optimizer.hpp"

namespace dwf {

using Json = nlohmann::ordered_json;

/// Shortest text that parses back to the same double; "inf", "-inf", "nan" otherwise.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    fail(ErrorKind::Format, "not a number: '" + s + "'");
  return v;
}

/// Finite values as JSON numbers; infinities as the strings "inf"/"-inf"; NaN as null.
inline Json json_number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double from_json_number(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Data, "write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- spec / models -------------------------------------------------------

inline Json spec_to_json(const MlpSpec& s) {
  return Json{{"layer_sizes", s.layer_sizes},
              {"activation", to_string(s.activation)},
              {"loss", to_string(s.loss)}};
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "softmax_cross_entropy") return LossKind::SoftmaxCrossEntropy;
  if (s == "mse") return LossKind::MeanSquaredError;
  fail(ErrorKind::Config, "unknown loss '" + s + "'");
}

inline MlpSpec spec_from_json(const Json& j) {
  MlpSpec s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  s.activation = activation_from_string(j.value("activation", std::string("relu")));
  s.loss = loss_from_string(j.value("loss", std::string("softmax_cross_entropy")));
  s.validate();
  return s;
}

inline constexpr int kCheckpointVersion = 1;

/// Factorized checkpoint: spec, depth and every factor array.
inline Json checkpoint_to_json(const FactorizedMlp& m) {
  Json layers = Json::array();
  auto param = [](const FactorizedParam& p) {
    return Json{{"rows", p.rows()}, {"cols", p.cols()}, {"factors", p.factors()}};
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l)
    layers.push_back(Json{{"weight", param(m.weights[l])}, {"bias", param(m.biases[l])}});
  return Json{{"format", "dwf-checkpoint"},
              {"version", kCheckpointVersion},
              {"spec", spec_to_json(m.spec)},
              {"depth", m.depth},
              {"layers", std::move(layers)}};
}

inline FactorizedMlp checkpoint_from_json(const Json& j) {
  if (j.value("format", std::string()) != "dwf-checkpoint")
    fail(ErrorKind::Format, "not a dwf-checkpoint document");
  if (j.value("version", 0) != kCheckpointVersion)
    fail(ErrorKind::Format, "unsupported checkpoint version");
  FactorizedMlp m;
  m.spec = spec_from_json(j.at("spec"));
  m.depth = j.at("depth").get<std::size_t>();
  auto param = [](const Json& p) {
    return FactorizedParam(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(),
                           p.at("factors").get<std::vector<std::vector<double>>>());
  };
  for (const auto& layer : j.at("layers")) {
    m.weights.push_back(param(layer.at("weight")));
    m.biases.push_back(param(layer.at("bias")));
  }
  m.validate();
  return m;
}

/// Collapsed dense export.
inline Json dense_to_json(const DenseMlp& m) {
  Json layers = Json::array();
  auto mat = [](const DenseMatrix& a) {
    return Json{{"rows", a.rows()},
                {"cols", a.cols()},
                {"values", std::vector<double>(a.values().begin(), a.values().end())}};
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l)
    layers.push_back(Json{{"weight", mat(m.weights[l])}, {"bias", mat(m.biases[l])}});
  return Json{{"format", "dwf-dense-model"},
              {"version", kCheckpointVersion},
              {"spec", spec_to_json(m.spec)},
              {"layers", std::move(layers)}};
}

inline DenseMlp dense_from_json(const Json& j) {
  if (j.value("format", std::string()) != "dwf-dense-model")
    fail(ErrorKind::Format, "not a dwf-dense-model document");
  if (j.value("version", 0) != kCheckpointVersion)
    fail(ErrorKind::Format, "unsupported dense model version");
  DenseMlp m;
  m.spec = spec_from_json(j.at("spec"));
  auto mat = [](const Json& a) {
    return DenseMatrix(a.at("rows").get<std::size_t>(), a.at("cols").get<std::size_t>(),
                       a.at("values").get<std::vector<double>>());
  };
  for (const auto& layer : j.at("layers")) {
    m.weights.push_back(mat(layer.at("weight")));
    m.biases.push_back(mat(layer.at("bias")));
  }
  return m;
}

// ---- reports and traces ----------------------------------------------------

inline Json sparsity_to_json(const SparsityReport& r) {
  Json layers = Json::array();
  for (const auto& l : r.layers) {
    Json e{{"name", l.name}, {"total", l.total}, {"nonzero", l.nonzero}, {"cr", json_number(l.cr)}};
    if (l.misalignment_normalized) e["misalignment_normalized"] = json_number(*l.misalignment_normalized);
    layers.push_back(std::move(e));
  }
  Json j{{"total_params", r.total_params},
         {"nonzero_params", r.nonzero_params},
         {"compression_ratio", json_number(r.compression_ratio)},
         {"sparsity", json_number(r.sparsity)},
         {"collapsed_l2", json_number(r.collapsed_l2)},
         {"layers", std::move(layers)}};
  if (r.misalignment_total) j["misalignment_total"] = json_number(*r.misalignment_total);
  return j;
}

inline std::string trace_csv_header(std::size_t layers) {
  std::string h = "epoch,lr,train_loss,train_acc,val_acc,cr,l2_collapsed,misalignment";
  for (std::size_t l = 0; l < layers; ++l) h += ",misalignment_layer" + std::to_string(l);
  for (std::size_t l = 0; l < layers; ++l) h += ",cr_layer" + std::to_string(l);
  return h;
}

inline std::string trace_to_csv(const std::vector<EpochTrace>& traces) {
  const std::size_t layers = traces.empty() ? 0 : traces.front().layer_cr.size();
  std::string out = trace_csv_header(layers) + "\n";
  for (const auto& t : traces) {
    out += std::to_string(t.epoch);
    for (double v : {t.lr, t.train_loss, t.train_acc, t.val_acc, t.cr, t.collapsed_l2, t.misalignment})
      out += "," + format_double(v);
    for (double v : t.layer_misalignment) out += "," + format_double(v);
    for (double v : t.layer_cr) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

inline Json trace_to_json(const std::vector<EpochTrace>& traces) {
  Json rows = Json::array();
  for (const auto& t : traces) {
    Json lm = Json::array();
    Json lc = Json::array();
    for (double v : t.layer_misalignment) lm.push_back(json_number(v));
    for (double v : t.layer_cr) lc.push_back(json_number(v));
    rows.push_back(Json{{"epoch", t.epoch},
                        {"lr", json_number(t.lr)},
                        {"train_loss", json_number(t.train_loss)},
                        {"train_acc", json_number(t.train_acc)},
                        {"val_acc", json_number(t.val_acc)},
                        {"cr", json_number(t.cr)},
                        {"l2_collapsed", json_number(t.collapsed_l2)},
                        {"misalignment", json_number(t.misalignment)},
                        {"layer_misalignment", std::move(lm)},
                        {"layer_cr", std::move(lc)}});
  }
  return rows;
}

/// Splits one CSV line on commas (no quoting is used by this library).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ---- masks -------------------------------------------------------------------

inline constexpr char kMaskMagic[8] = {'D', 'W', 'F', 'M', 'A', 'S', 'K', '\0'};
inline constexpr std::uint32_t kMaskVersion = 1;

/// Layout (little-endian): 8-byte magic "DWFMASK\0", u32 version, u32 tensor
/// count, then per tensor u32 rows, u32 cols and ceil(rows*cols/8) bytes of
/// keep bits, least significant bit first.
inline std::vector<std::uint8_t> mask_to_bytes(const PruneMask& mask) {
  std::vector<std::uint8_t> out(kMaskMagic, kMaskMagic + 8);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put32(kMaskVersion);
  put32(static_cast<std::uint32_t>(mask.tensors.size()));
  for (const auto& t : mask.tensors) {
    put32(static_cast<std::uint32_t>(t.rows));
    put32(static_cast<std::uint32_t>(t.cols));
    std::vector<std::uint8_t> bits((t.keep.size() + 7) / 8, 0);
    for (std::size_t j = 0; j < t.keep.size(); ++j)
      if (t.keep[j]) bits[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  return out;
}

inline PruneMask mask_from_bytes(const std::vector<std::uint8_t>& in) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > in.size()) fail(ErrorKind::Data, "mask file truncated");
  };
  auto get32 = [&]() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{in[pos + static_cast<std::size_t>(i)]} << (8 * i);
    pos += 4;
    return v;
  };
  need(8);
  if (std::memcmp(in.data(), kMaskMagic, 8) != 0) fail(ErrorKind::Format, "bad mask magic");
  pos = 8;
  if (get32() != kMaskVersion) fail(ErrorKind::Format, "unsupported mask version");
  const std::uint32_t count = get32();
  PruneMask mask;
  for (std::uint32_t t = 0; t < count; ++t) {
    PruneMask::Tensor tensor;
    tensor.rows = get32();
    tensor.cols = get32();
    const std::size_t n = tensor.rows * tensor.cols;
    need((n + 7) / 8);
    tensor.keep.resize(n);
    for (std::size_t j = 0; j < n; ++j) tensor.keep[j] = (in[pos + j / 8] >> (j % 8)) & 1u;
    pos += (n + 7) / 8;
    mask.tensors.push_back(std::move(tensor));
  }
  if (pos != in.size()) fail(ErrorKind::Format, "trailing bytes in mask file");
  return mask;
}

inline void write_mask(const std::filesystem::path& path, const PruneMask& mask) {
  const auto bytes = mask_to_bytes(mask);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

inline PruneMask read_mask(const std::filesystem::path& path) {
  const std::string s = read_text(path);
  return mask_from_bytes(std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace dwf
