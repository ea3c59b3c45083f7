#include "otfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "otfuse/errors.hpp"
#include "otfuse/rng.hpp"

namespace otfuse::nn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

void apply_hidden_activation(HiddenActivation act, std::span<double> v) {
  switch (act) {
    case HiddenActivation::Tanh:
      for (double& x : v) x = std::tanh(x);
      break;
    case HiddenActivation::Relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
  }
}

void apply_softmax(std::span<double> v) {
  double hi = v[0];
  for (double x : v) hi = std::max(hi, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - hi);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

}  // namespace

HiddenActivation hidden_activation_from_string(const std::string& s) {
  if (s == "tanh") return HiddenActivation::Tanh;
  if (s == "relu") return HiddenActivation::Relu;
  throw ValidationError("unknown hidden activation '" + s + "' (expected tanh or relu)");
}

OutputActivation output_activation_from_string(const std::string& s) {
  if (s == "softmax") return OutputActivation::Softmax;
  if (s == "identity") return OutputActivation::Identity;
  throw ValidationError("unknown output activation '" + s + "' (expected softmax or identity)");
}

std::string to_string(HiddenActivation a) {
  return a == HiddenActivation::Tanh ? "tanh" : "relu";
}

std::string to_string(OutputActivation a) {
  return a == OutputActivation::Softmax ? "softmax" : "identity";
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].data.size() + biases[l].size();
  }
  return n;
}

bool MlpModel::same_architecture(const MlpModel& o) const {
  return layer_sizes == o.layer_sizes && hidden_activation == o.hidden_activation &&
         output_activation == o.output_activation;
}

void MlpModel::validate() const {
  if (layer_sizes.size() < 3) {
    throw ValidationError("model needs at least one hidden layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw ValidationError("layer sizes must be positive");
  }
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
    throw ValidationError("model has " + std::to_string(weights.size()) + " weight layers for " +
                          std::to_string(layer_sizes.size()) + " layer sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto out = static_cast<std::size_t>(layer_sizes[l + 1]);
    const auto in = static_cast<std::size_t>(layer_sizes[l]);
    if (weights[l].rows != out || weights[l].cols != in || biases[l].size() != out) {
      throw ValidationError("layer " + std::to_string(l) + " parameters do not match layer_sizes");
    }
    for (double w : weights[l].data) {
      if (!std::isfinite(w)) throw ValidationError("non-finite weight in layer " + std::to_string(l));
    }
    for (double b : biases[l]) {
      if (!std::isfinite(b)) throw ValidationError("non-finite bias in layer " + std::to_string(l));
    }
  }
}

MlpModel make_mlp(std::vector<int> layer_sizes, HiddenActivation hidden, OutputActivation output) {
  MlpModel m;
  m.layer_sizes = std::move(layer_sizes);
  m.hidden_activation = hidden;
  m.output_activation = output;
  if (m.layer_sizes.size() < 3) throw ValidationError("model needs at least one hidden layer");
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    m.weights.emplace_back(static_cast<std::size_t>(m.layer_sizes[l + 1]),
                           static_cast<std::size_t>(m.layer_sizes[l]));
    m.biases.emplace_back(static_cast<std::size_t>(m.layer_sizes[l + 1]), 0.0);
  }
  m.validate();
  return m;
}

MlpModel glorot_init(std::vector<int> layer_sizes, std::uint64_t seed, HiddenActivation hidden,
                     OutputActivation output) {
  MlpModel m = make_mlp(std::move(layer_sizes), hidden, output);
  Rng rng(seed);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const double fan_in = static_cast<double>(m.layer_sizes[l]);
    const double fan_out = static_cast<double>(m.layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : m.weights[l].data) w = rng.uniform(-bound, bound);
  }
  return m;
}

std::vector<double> forward(const MlpModel& model, std::span<const double> input,
                            kernels::Exec exec) {
  if (input.size() != static_cast<std::size_t>(model.input_size())) {
    throw ValidationError("forward: input has dimension " + std::to_string(input.size()) +
                          ", model expects " + std::to_string(model.input_size()));
  }
  std::vector<double> cur(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    next.assign(model.weights[l].rows, 0.0);
    kernels::affine(model.weights[l], cur, model.biases[l], next, exec);
    if (l + 1 < model.weights.size()) {
      apply_hidden_activation(model.hidden_activation, next);
    } else if (model.output_activation == OutputActivation::Softmax) {
      apply_softmax(next);
    }
    cur.swap(next);
  }
  return cur;
}

Matrix forward_batch(const MlpModel& model, const Matrix& inputs, kernels::Exec exec) {
  if (inputs.cols != static_cast<std::size_t>(model.input_size())) {
    throw ValidationError("forward_batch: inputs have dimension " + std::to_string(inputs.cols) +
                          ", model expects " + std::to_string(model.input_size()));
  }
  Matrix cur = inputs;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Matrix next = kernels::affine_batch(cur, model.weights[l], model.biases[l], exec);
    if (l + 1 < model.weights.size()) {
      for (std::size_t i = 0; i < next.rows; ++i) {
        apply_hidden_activation(model.hidden_activation, next.row(i));
      }
    } else if (model.output_activation == OutputActivation::Softmax) {
      for (std::size_t i = 0; i < next.rows; ++i) apply_softmax(next.row(i));
    }
    cur = std::move(next);
  }
  return cur;
}

MlpModel apply_hidden_permutation(const MlpModel& model, std::size_t hidden_index,
                                  const ot::Permutation& perm) {
  model.validate();
  if (hidden_index >= model.num_hidden_layers()) {
    throw ValidationError("hidden layer index " + std::to_string(hidden_index) +
                          " out of range; model has " + std::to_string(model.num_hidden_layers()) +
                          " hidden layers (input and output layers cannot be permuted)");
  }
  const std::size_t width = static_cast<std::size_t>(model.layer_sizes[hidden_index + 1]);
  if (perm.size() != width) {
    throw ValidationError("permutation size " + std::to_string(perm.size()) +
                          " does not match hidden layer width " + std::to_string(width));
  }
  perm.validate();

  MlpModel out = model;
  const std::size_t l = hidden_index;
  for (std::size_t r = 0; r < width; ++r) {
    const auto src = static_cast<std::size_t>(perm.mapping[r]);
    std::copy_n(model.weights[l].row(src).data(), model.weights[l].cols,
                out.weights[l].row(r).data());
    out.biases[l][r] = model.biases[l][src];
  }
  for (std::size_t r = 0; r < model.weights[l + 1].rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out.weights[l + 1](r, c) = model.weights[l + 1](r, static_cast<std::size_t>(perm.mapping[c]));
    }
  }
  return out;
}

ProbeSet make_probe_set(int input_dim, std::size_t count, std::uint64_t seed) {
  if (input_dim < 1 || count == 0) throw ValidationError("probe set must be non-empty");
  ProbeSet probes;
  probes.seed = seed;
  probes.inputs = Matrix(count, static_cast<std::size_t>(input_dim));
  Rng rng(seed);
  for (double& x : probes.inputs.data) x = rng.uniform(-1.0, 1.0);
  return probes;
}

double functional_distance(const MlpModel& a, const MlpModel& b, const ProbeSet& probes,
                           kernels::Exec exec) {
  if (a.input_size() != b.input_size() || a.output_size() != b.output_size()) {
    throw ValidationError("functional_distance: models disagree on input/output dimensions");
  }
  if (probes.inputs.rows == 0) throw ValidationError("probe set must be non-empty");
  const Matrix ya = forward_batch(a, probes.inputs, exec);
  const Matrix yb = forward_batch(b, probes.inputs, exec);
  double worst = 0.0;
  for (std::size_t i = 0; i < ya.data.size(); ++i) {
    worst = std::max(worst, std::abs(ya.data[i] - yb.data[i]));
  }
  return worst;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  model.validate();
  nlohmann::json j;
  j["format"] = "otfuse-mlp";
  j["version"] = 1;
  j["layer_sizes"] = model.layer_sizes;
  j["hidden_activation"] = to_string(model.hidden_activation);
  j["output_activation"] = to_string(model.output_activation);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < model.weights[l].rows; ++r) {
      auto row = model.weights[l].row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    layers.push_back({{"weights", std::move(rows)}, {"biases", model.biases[l]}});
  }
  j["layers"] = std::move(layers);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("failed writing model to '" + path.string() + "'");
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }

  try {
    if (!j.is_object() || j.value("format", "") != "otfuse-mlp") {
      throw FormatError("model file '" + path.string() + "' lacks the otfuse-mlp format tag");
    }
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != 1) {
      throw VersionError("model file '" + path.string() + "' has unsupported version " +
                         (j.contains("version") ? j["version"].dump() : "<missing>"));
    }
    MlpModel m;
    m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    m.hidden_activation = hidden_activation_from_string(j.at("hidden_activation").get<std::string>());
    m.output_activation = output_activation_from_string(j.at("output_activation").get<std::string>());
    if (m.layer_sizes.size() < 3) {
      throw FileShapeError("model file '" + path.string() + "' declares no hidden layer");
    }
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != m.layer_sizes.size() - 1) {
      throw FileShapeError("model file '" + path.string() + "' has " +
                           std::to_string(layers.size()) + " layers for " +
                           std::to_string(m.layer_sizes.size()) + " layer sizes");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
      const auto in_dim = static_cast<std::size_t>(m.layer_sizes[l]);
      const auto& rows = layers[l].at("weights");
      if (!rows.is_array() || rows.size() != out) {
        throw FileShapeError("model file '" + path.string() + "': layer " + std::to_string(l) +
                             " weight shape contradicts layer_sizes");
      }
      Matrix w(out, in_dim);
      for (std::size_t r = 0; r < out; ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != in_dim) {
          throw FileShapeError("model file '" + path.string() + "': layer " + std::to_string(l) +
                               " weight shape contradicts layer_sizes");
        }
        std::copy(row.begin(), row.end(), w.row(r).data());
      }
      auto biases = layers[l].at("biases").get<std::vector<double>>();
      if (biases.size() != out) {
        throw FileShapeError("model file '" + path.string() + "': layer " + std::to_string(l) +
                             " bias length contradicts layer_sizes");
      }
      m.weights.push_back(std::move(w));
      m.biases.push_back(std::move(biases));
    }
    try {
      m.validate();
    } catch (const ValidationError& e) {
      throw FileShapeError("model file '" + path.string() + "': " + e.what());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model file '" + path.string() + "' is malformed: " + e.what());
  }
}

void LabeledDataset::validate() const {
  if (inputs.rows != labels.size()) {
    throw ValidationError("dataset has " + std::to_string(inputs.rows) + " inputs and " +
                          std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw ValidationError("dataset label out of range");
  }
}

namespace {

std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path) {
  const auto img = read_all_bytes(images_path);
  if (img.size() < 16) {
    throw FormatError("IDX image file '" + images_path.string() + "' is shorter than its header");
  }
  if (read_u32_be(img, 0) != kImageMagic) {
    throw FormatError("IDX image file '" + images_path.string() + "' has wrong magic");
  }
  const std::size_t count = read_u32_be(img, 4);
  const std::size_t rows = read_u32_be(img, 8);
  const std::size_t cols = read_u32_be(img, 12);
  if (img.size() - 16 != count * rows * cols) {
    throw FormatError("IDX image file '" + images_path.string() + "' payload is " +
                      std::to_string(img.size() - 16) + " bytes, header promises " +
                      std::to_string(count * rows * cols));
  }

  const auto lab = read_all_bytes(labels_path);
  if (lab.size() < 8) {
    throw FormatError("IDX label file '" + labels_path.string() + "' is shorter than its header");
  }
  if (read_u32_be(lab, 0) != kLabelMagic) {
    throw FormatError("IDX label file '" + labels_path.string() + "' has wrong magic");
  }
  const std::size_t label_count = read_u32_be(lab, 4);
  if (lab.size() - 8 != label_count) {
    throw FormatError("IDX label file '" + labels_path.string() + "' payload is " +
                      std::to_string(lab.size() - 8) + " bytes, header promises " +
                      std::to_string(label_count));
  }
  if (label_count != count) {
    throw FormatError("IDX pair mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(label_count) + " labels");
  }

  LabeledDataset ds;
  ds.inputs = Matrix(count, rows * cols);
  ds.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t base = 16 + i * rows * cols;
    for (std::size_t p = 0; p < rows * cols; ++p) {
      ds.inputs(i, p) = static_cast<double>(img[base + p]) / 255.0;
    }
    ds.labels[i] = static_cast<int>(lab[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

LabeledDataset relabel_binary(const LabeledDataset& dataset, const std::set<int>& positive_digits) {
  if (positive_digits.empty()) {
    throw ValidationError("relabel_binary: positive digit set must be non-empty");
  }
  for (int d : positive_digits) {
    if (d < 0 || d >= dataset.num_classes) {
      throw ValidationError("relabel_binary: digit " + std::to_string(d) +
                            " outside the dataset's " + std::to_string(dataset.num_classes) +
                            " classes");
    }
  }
  LabeledDataset out;
  out.inputs = dataset.inputs;
  out.num_classes = 2;
  out.labels.resize(dataset.labels.size());
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    out.labels[i] = positive_digits.count(dataset.labels[i]) ? 0 : 1;
  }
  return out;
}

}  // namespace otfuse::nn
