#include "fastprio/model_io.hpp"

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ManifestReader {
 public:
  explicit ManifestReader(fs::path path) : path_(std::move(path)), base_(path_.parent_path()) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(path_.string() + ": " + why);
  }

  std::size_t count(const json& obj, const char* key, const std::string& where) const {
    if (!obj.contains(key) || !obj[key].is_number_unsigned()) {
      fail(where + " needs non-negative integer \"" + key + "\"");
    }
    return obj[key].get<std::size_t>();
  }

  Tensor blob(const json& layer, const char* key, const std::string& where) const {
    if (!layer.contains(key) || !layer[key].is_string()) fail(where + " needs blob path \"" + key + "\"");
    const fs::path p = base_ / layer[key].get<std::string>();
    if (!fs::exists(p)) {
      throw MissingFileError(path_.string() + ": " + where + " references missing blob " + p.string());
    }
    return read_tensor(p);
  }

  LayerSpec layer(const json& j, std::size_t index) const {
    const std::string where = "layer " + std::to_string(index);
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail(where + " needs a string \"kind\"");
    const json params = j.value("params", json::object());
    if (!params.is_object()) fail(where + " \"params\" must be an object");
    LayerKind kind;
    try {
      kind = parse_layer_kind(j["kind"].get<std::string>());
    } catch (const FormatError& e) {
      fail(where + ": " + e.what());
    }
    switch (kind) {
      case LayerKind::dense: {
        const auto in = count(params, "in", where);
        const auto out = count(params, "out", where);
        Tensor w = blob(j, "weights", where);
        Tensor b = blob(j, "bias", where);
        if (w.shape() != Shape{in, out}) {
          throw ShapeChainError(path_.string() + ": " + where + " declares " + std::to_string(in) + "->" +
                                std::to_string(out) + " but weights are " + shape_to_string(w.shape()));
        }
        if (b.shape() != Shape{out}) {
          throw ShapeChainError(path_.string() + ": " + where + " bias is " + shape_to_string(b.shape()) +
                                ", expected [" + std::to_string(out) + "]");
        }
        return LayerSpec::dense(std::move(w), std::move(b));
      }
      case LayerKind::conv2d: {
        const auto ic = count(params, "in_channels", where);
        const auto oc = count(params, "out_channels", where);
        if (!params.contains("kernel") || !params["kernel"].is_array() || params["kernel"].size() != 2) {
          fail(where + " needs \"kernel\": [kh, kw]");
        }
        const auto kh = params["kernel"][0].get<std::size_t>();
        const auto kw = params["kernel"][1].get<std::size_t>();
        const auto stride = params.contains("stride") ? count(params, "stride", where) : 1;
        const auto padding = params.contains("padding") ? count(params, "padding", where) : 0;
        Tensor w = blob(j, "weights", where);
        Tensor b = blob(j, "bias", where);
        if (w.shape() != Shape{oc, ic, kh, kw} || b.shape() != Shape{oc}) {
          throw ShapeChainError(path_.string() + ": " + where + " kernel " + shape_to_string(w.shape()) +
                                " / bias " + shape_to_string(b.shape()) + " disagree with declared params");
        }
        return LayerSpec::conv2d(std::move(w), std::move(b), stride, padding);
      }
      case LayerKind::maxpool2d:
        return LayerSpec::maxpool2d(count(params, "window", where), count(params, "stride", where));
      case LayerKind::dropout:
        if (!params.contains("rate") || !params["rate"].is_number()) fail(where + " needs numeric \"rate\"");
        return LayerSpec::dropout(params["rate"].get<double>());
      case LayerKind::relu: return LayerSpec::relu();
      case LayerKind::flatten: return LayerSpec::flatten();
      case LayerKind::softmax: return LayerSpec::softmax();
    }
    fail(where + ": unsupported kind");
  }

  Model read() const {
    json j;
    try {
      j = json::parse(read_file_bytes(path_));
    } catch (const json::exception& e) {
      fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail("manifest must be a JSON object");
    const auto classes = count(j, "classes", "manifest");
    if (!j.contains("input_shape") || !j["input_shape"].is_array() || j["input_shape"].empty()) {
      fail("manifest needs a non-empty \"input_shape\" array");
    }
    Shape input;
    for (const auto& d : j["input_shape"]) {
      if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) fail("input_shape entries must be positive integers");
      input.push_back(d.get<std::size_t>());
    }
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty()) {
      fail("manifest needs a non-empty \"layers\" array");
    }
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < j["layers"].size(); ++i) layers.push_back(layer(j["layers"][i], i));
    std::optional<std::size_t> feature;
    if (j.contains("feature_layer") && !j["feature_layer"].is_null()) {
      feature = count(j, "feature_layer", "manifest");
    }
    try {
      return Model(std::move(layers), classes, std::move(input), feature);
    } catch (const ShapeChainError& e) {
      throw ShapeChainError(path_.string() + ": " + e.what());
    }
  }

 private:
  fs::path path_;
  fs::path base_;
};

json layer_params(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::dense:
      return {{"in", l.weight.dim(0)}, {"out", l.weight.dim(1)}};
    case LayerKind::conv2d:
      return {{"in_channels", l.weight.dim(1)},
              {"out_channels", l.weight.dim(0)},
              {"kernel", {l.weight.dim(2), l.weight.dim(3)}},
              {"stride", l.stride},
              {"padding", l.padding}};
    case LayerKind::maxpool2d:
      return {{"window", l.window}, {"stride", l.stride}};
    case LayerKind::dropout:
      return {{"rate", l.rate}};
    default:
      return json::object();
  }
}

json manifest_json(const Model& model) {
  json layers = json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"kind", std::string(to_string(l.kind))}, {"params", layer_params(l)}});
  }
  return {{"classes", model.classes()},
          {"input_shape", model.input_shape()},
          {"feature_layer", model.feature_layer()},
          {"layers", layers}};
}

}  // namespace

Model load_model(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw MissingFileError("model manifest not found: " + manifest.string());
  return ManifestReader(manifest).read();
}

void save_model(const Model& model, const fs::path& manifest) {
  json j = manifest_json(model);
  const std::string blob_dir = manifest.stem().string() + ".blobs";
  const fs::path base = manifest.parent_path();
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto& l = model.layers()[i];
    if (!l.has_parameters()) continue;
    const std::string w = blob_dir + "/l" + std::to_string(i) + ".weights.fpt";
    const std::string b = blob_dir + "/l" + std::to_string(i) + ".bias.fpt";
    write_tensor(base / w, l.weight);
    write_tensor(base / b, l.bias);
    j["layers"][i]["weights"] = w;
    j["layers"][i]["bias"] = b;
  }
  write_file_bytes(manifest, j.dump(2) + "\n");
}

std::string model_fingerprint_bytes(const Model& model) {
  std::string out = manifest_json(model).dump();
  for (const auto& l : model.layers()) {
    if (!l.has_parameters()) continue;
    out += encode_tensor(l.weight);
    out += encode_tensor(l.bias);
  }
  return out;
}

}  // namespace fastprio
