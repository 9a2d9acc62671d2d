#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "conseg/autodiff.hpp"
#include "conseg/rng.hpp"

namespace conseg::ad {

// Owns all trainable parameters of a model under stable hierarchical names
// ("encoder/layer0/head1/w_q"). Registration order is deterministic and is
// the iteration order for the optimizer.
class ParameterStore {
  public:
    Parameter& create(const std::string& name, Shape shape);
    Parameter& create_normal(const std::string& name, Shape shape, Rng& rng, double stddev);
    Parameter& create_xavier(const std::string& name, Shape shape, Rng& rng);

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& at(const std::string& name);

    std::vector<Parameter*> all();
    size_t count() const { return params_.size(); }
    int64_t total_size() const;

    void zero_grad();

    // Deep copy of current values (used for best-checkpoint retention).
    std::vector<std::vector<double>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<double>>& snap);

    // Checkpoint: flat archive of name -> shape + little-endian f64 payload,
    // preceded by a JSON manifest.
    void save(const std::string& path, const std::string& manifest_json) const;
    // Loads values into matching parameters (all must exist with identical
    // shapes); returns the stored manifest.
    std::string load(const std::string& path);

    // Reads just the manifest of a checkpoint file.
    static std::string read_manifest(const std::string& path);

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, size_t> index_;
};

// Adaptive-moment update with decoupled weight decay and bias-corrected
// moments (beta1 0.9, beta2 0.999, eps 1e-8).
struct OptimizerConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    // Applies one update from Parameter::grad; throws TrainingError naming
    // the parameter on a non-finite gradient.
    void step(std::vector<Parameter*> params);
    int64_t step_count() const { return step_; }
    const OptimizerConfig& config() const { return cfg_; }

  private:
    OptimizerConfig cfg_;
    int64_t step_ = 0;
};

}  // namespace conseg::ad
