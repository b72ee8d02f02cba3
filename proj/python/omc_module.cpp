#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "omc/error.hpp"
#include "omc/experiment.hpp"
#include "omc/float_codec.hpp"
#include "omc/param_store.hpp"
#include "omc/quant_policy.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::span<const float> as_span(const FloatArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

FloatArray to_array(const std::vector<float>& v) {
  FloatArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

omc::PolicyConfig make_policy(const std::string& format, double q, bool weights_only, bool use_pvt,
                              std::uint64_t selection_seed) {
  omc::PolicyConfig p;
  p.format = omc::FloatFormat::parse(format);
  p.quantize_fraction = q;
  p.weights_only = weights_only;
  p.use_pvt = use_pvt;
  p.selection_seed = selection_seed;
  p.validate();
  return p;
}

py::dict summary_dict(const omc::RunSummary& s) {
  py::dict d;
  d["label"] = s.label;
  d["final_loss"] = s.final_loss;
  d["final_accuracy"] = s.final_accuracy;
  d["memory_ratio"] = s.memory_ratio;
  d["bytes_down_total"] = s.bytes_down_total;
  d["bytes_up_total"] = s.bytes_up_total;
  d["rounds"] = s.rounds;
  py::list rows;
  for (const auto& m : s.metrics) {
    py::dict r;
    r["round"] = m.round;
    r["eval_loss"] = m.eval_loss ? py::cast(*m.eval_loss) : py::none();
    r["eval_accuracy"] = m.eval_accuracy ? py::cast(*m.eval_accuracy) : py::none();
    r["bytes_down"] = m.bytes_down;
    r["bytes_up"] = m.bytes_up;
    r["param_mem_bytes"] = m.param_mem_bytes;
    r["peak_transient_bytes"] = m.peak_transient_bytes;
    r["clients_trained"] = m.clients_trained;
    r["clients_failed"] = m.clients_failed;
    rows.append(r);
  }
  d["metrics"] = rows;
  return d;
}

}  // namespace

PYBIND11_MODULE(_omc, m) {
  m.doc() = "Minifloat codec, affine restoration, and federated training with compressed models";

  auto error = py::register_exception<omc::Error>(m, "OmcError", PyExc_ValueError);
  (void)error;

  // ---- float codec -------------------------------------------------------
  py::class_<omc::FloatFormat>(m, "FloatFormat")
      .def(py::init<int, int>(), py::arg("exponent_bits"), py::arg("mantissa_bits"))
      .def_static("parse", &omc::FloatFormat::parse, py::arg("text"))
      .def_property_readonly("exponent_bits", &omc::FloatFormat::exponent_bits)
      .def_property_readonly("mantissa_bits", &omc::FloatFormat::mantissa_bits)
      .def_property_readonly("total_bits", &omc::FloatFormat::total_bits)
      .def_property_readonly("bias", &omc::FloatFormat::bias)
      .def_property_readonly("max_finite", &omc::FloatFormat::max_finite)
      .def_property_readonly("min_normal", &omc::FloatFormat::min_normal)
      .def_property_readonly("min_subnormal", &omc::FloatFormat::min_subnormal)
      .def("__str__", &omc::FloatFormat::to_string)
      .def("__repr__", [](const omc::FloatFormat& f) { return "FloatFormat('" + f.to_string() + "')"; })
      .def(py::self == py::self);

  auto parse_fmt = [](const std::string& s) { return omc::FloatFormat::parse(s); };

  m.def(
      "encode", [=](float x, const std::string& fmt) { return omc::encode(x, parse_fmt(fmt)).bits; },
      py::arg("x"), py::arg("format"), "Bit pattern of x in the format, as an integer.");
  m.def(
      "decode", [=](std::uint32_t bits, const std::string& fmt) { return omc::decode({bits}, parse_fmt(fmt)); },
      py::arg("bits"), py::arg("format"));
  m.def(
      "quantize",
      [=](const FloatArray& values, const std::string& fmt) {
        const auto f = parse_fmt(fmt);
        FloatArray out(values.request().shape);
        const float* in = values.data();
        float* o = out.mutable_data();
        for (py::ssize_t i = 0; i < values.size(); ++i) o[i] = omc::quantize_value(in[i], f);
        return out;
      },
      py::arg("values"), py::arg("format"), "Round-trip every element through the format.");
  m.def(
      "pack",
      [=](const FloatArray& values, const std::string& fmt) {
        const auto buf = omc::pack(as_span(values), parse_fmt(fmt));
        const auto& b = buf.bytes();
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      },
      py::arg("values"), py::arg("format"));
  m.def(
      "unpack",
      [=](const py::bytes& data, std::size_t count, const std::string& fmt) {
        const std::string raw = data;
        omc::PackedBuffer buf(parse_fmt(fmt), count, std::vector<std::uint8_t>(raw.begin(), raw.end()));
        return to_array(omc::unpack(buf));
      },
      py::arg("data"), py::arg("count"), py::arg("format"));
  m.def(
      "packed_size",
      [=](std::size_t count, const std::string& fmt) { return omc::PackedBuffer::byte_length(count, parse_fmt(fmt)); },
      py::arg("count"), py::arg("format"));
  m.def(
      "codec_report",
      [=](const std::string& fmt, const std::vector<float>& values) { return omc::codec_report(parse_fmt(fmt), values); },
      py::arg("format"), py::arg("values") = std::vector<float>{});

  // ---- affine restoration ------------------------------------------------
  m.def(
      "fit_transform",
      [](const FloatArray& original, const FloatArray& dequantized) {
        const auto t = omc::fit_transform(as_span(original), as_span(dequantized));
        return py::make_tuple(t.scale, t.bias);
      },
      py::arg("original"), py::arg("dequantized"), "Least-squares (scale, bias) with original ~ scale*v + bias.");
  m.def(
      "apply_transform",
      [](const FloatArray& values, float scale, float bias) {
        return to_array(omc::apply_transform(as_span(values), {scale, bias}));
      },
      py::arg("values"), py::arg("scale"), py::arg("bias"));
  m.def(
      "compress_roundtrip",
      [=](const FloatArray& values, const std::string& fmt, bool use_pvt) {
        const std::vector<std::uint32_t> shape{static_cast<std::uint32_t>(values.size())};
        const auto rec = omc::compress_variable("v", shape, omc::VariableKind::kWeightMatrix, as_span(values),
                                                parse_fmt(fmt), use_pvt);
        const auto& q = std::get<omc::Quantized>(rec.storage);
        return py::make_tuple(to_array(omc::decompress_variable(rec)), q.transform.scale, q.transform.bias,
                              rec.memory_bytes());
      },
      py::arg("values"), py::arg("format"), py::arg("use_pvt") = true,
      "Compress one variable and return (restored, scale, bias, memory_bytes).");
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        const auto store = omc::load_store_file(path);
        py::dict out;
        for (const auto& rec : store.records()) {
          auto values = to_array(omc::decompress_variable(rec));
          std::vector<py::ssize_t> shape(rec.shape.begin(), rec.shape.end());
          out[py::str(rec.name)] = values.reshape(shape);
        }
        return out;
      },
      py::arg("path"), "Decompressed variables of a checkpoint, by name.");

  // ---- selection and memory ----------------------------------------------
  m.def(
      "select_variables",
      [=](const std::vector<std::pair<std::string, std::string>>& variables, double q, std::uint64_t round,
          std::uint64_t client, bool weights_only, std::uint64_t selection_seed) {
        std::vector<omc::VariableTag> tags;
        for (const auto& [name, kind] : variables) {
          omc::VariableTag t{name, omc::VariableKind::kOther};
          for (std::uint8_t c = 0; c <= static_cast<std::uint8_t>(omc::VariableKind::kOther); ++c) {
            const auto k = *omc::variable_kind_from_code(c);
            if (omc::variable_kind_name(k) == kind) t.kind = k;
          }
          tags.push_back(std::move(t));
        }
        const auto policy = make_policy("S1E3M7", q, weights_only, true, selection_seed);
        return omc::select_variables(tags, policy, round, client).names;
      },
      py::arg("variables"), py::arg("q"), py::arg("round"), py::arg("client"), py::arg("weights_only") = true,
      py::arg("selection_seed") = 0,
      "Names chosen for quantization; variables are (name, kind) pairs with kind such as 'weight_matrix'.");
  m.def(
      "memory_ratio",
      [](double weight_fraction, const std::string& fmt, double q, bool weights_only) {
        const auto inv = omc::synthetic_inventory(weight_fraction);
        return omc::memory_ratio(inv, make_policy(fmt, q, weights_only, true, 0));
      },
      py::arg("weight_fraction"), py::arg("format"), py::arg("q"), py::arg("weights_only") = true,
      "Expected compressed/FP32 bytes for a synthetic model with the given weight share.");

  // ---- experiments -------------------------------------------------------
  py::class_<omc::ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def_static(
          "parse", [](const std::string& text) { return omc::parse_config(text); }, py::arg("text"))
      .def_static(
          "load", [](const std::string& path) { return omc::load_config_file(path); }, py::arg("path"))
      .def(
          "set",
          [](omc::ExperimentConfig& c, const std::string& key, const std::string& value) {
            omc::set_config_value(c, key, value);
          },
          py::arg("key"), py::arg("value"))
      .def("validate", &omc::ExperimentConfig::validate)
      .def("render", [](const omc::ExperimentConfig& c) { return omc::render_config(c); })
      .def_static("keys", &omc::config_keys);

  m.def(
      "run",
      [](const omc::ExperimentConfig& cfg, const std::string& out) {
        omc::RunSummary s;
        {
          py::gil_scoped_release release;
          s = omc::run_command(cfg, out);
        }
        return summary_dict(s);
      },
      py::arg("config"), py::arg("out"), "Train, writing metrics.csv, summary.json and final.omc into out.");
}
