#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "otfuse/kernels.hpp"
#include "otfuse/matrix.hpp"
#include "otfuse/otcore.hpp"

namespace otfuse::nn {

enum class HiddenActivation { Tanh, Relu };
enum class OutputActivation { Softmax, Identity };

HiddenActivation hidden_activation_from_string(const std::string& s);
OutputActivation output_activation_from_string(const std::string& s);
std::string to_string(HiddenActivation a);
std::string to_string(OutputActivation a);

// Fully-connected network. weights[l] has shape
// (layer_sizes[l+1] x layer_sizes[l]); row r is the incoming-weight vector of
// neuron r of layer l+1. Treated as an immutable value: every operation
// returns a new model.
struct MlpModel {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  HiddenActivation hidden_activation = HiddenActivation::Tanh;
  OutputActivation output_activation = OutputActivation::Softmax;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t num_hidden_layers() const { return layer_sizes.size() - 2; }
  std::size_t parameter_count() const;
  bool same_architecture(const MlpModel& o) const;
  void validate() const;

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.layer_sizes == b.layer_sizes && a.weights == b.weights && a.biases == b.biases &&
           a.hidden_activation == b.hidden_activation && a.output_activation == b.output_activation;
  }
};

// Zero-initialised model of the given architecture.
MlpModel make_mlp(std::vector<int> layer_sizes, HiddenActivation hidden = HiddenActivation::Tanh,
                  OutputActivation output = OutputActivation::Softmax);

// Scaled uniform init in +-sqrt(6/(fan_in+fan_out)), seeded.
MlpModel glorot_init(std::vector<int> layer_sizes, std::uint64_t seed,
                     HiddenActivation hidden = HiddenActivation::Tanh,
                     OutputActivation output = OutputActivation::Softmax);

std::vector<double> forward(const MlpModel& model, std::span<const double> input,
                            kernels::Exec exec = kernels::default_exec());

// Batch forward; rows of `inputs` are examples, rows of the result are
// outputs.
Matrix forward_batch(const MlpModel& model, const Matrix& inputs,
                     kernels::Exec exec = kernels::default_exec());

// Reorders the neurons of one hidden layer (0-based among hidden layers) and
// the next layer's matching input columns. Function-preserving by
// construction.
MlpModel apply_hidden_permutation(const MlpModel& model, std::size_t hidden_index,
                                  const ot::Permutation& perm);

struct ProbeSet {
  Matrix inputs;
  std::uint64_t seed = 0;
};

ProbeSet make_probe_set(int input_dim, std::size_t count, std::uint64_t seed);

// max over probes of the L-inf distance between forward outputs.
double functional_distance(const MlpModel& a, const MlpModel& b, const ProbeSet& probes,
                           kernels::Exec exec = kernels::default_exec());

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

struct LabeledDataset {
  Matrix inputs;  // one example per row
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

// Reads the big-endian IDX pair used by MNIST (image magic 0x00000803,
// label magic 0x00000801); pixels scaled to [0,1] by /255.
LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path);

// Two-class view: label 0 ("yes") iff the original label is in
// positive_digits, else 1 ("no").
LabeledDataset relabel_binary(const LabeledDataset& dataset, const std::set<int>& positive_digits);

}  // namespace otfuse::nn
