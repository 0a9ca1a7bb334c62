#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "emstdp/dataset.hpp"
#include "emstdp/mapper.hpp"
#include "emstdp/network.hpp"
#include "emstdp/oracle.hpp"

namespace emstdp {

// Categorized failures; the CLI maps these to distinct exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. Files hold one pair per line
// ('#' comments); CLI flags override file values.
struct RunConfig {
    std::string structure = "28x28x1-100d-10d";
    std::string feedback = "DFA";
    std::int32_t phase_len = 64;
    std::int64_t theta = 64;
    std::int64_t eta_num = 1;
    std::uint32_t eta_shift = 3;
    std::uint32_t update_shift = 3;
    std::int32_t epochs = 3;
    std::uint64_t seed = 42;
    std::string rounding = "stochastic";

    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::string train_csv;
    std::string test_csv;
    std::int32_t csv_rows = 28;
    std::int32_t csv_cols = 28;
    std::int64_t synth_train = 0; // >0: use the procedural digit set instead
    std::int64_t synth_test = 0;
    std::int64_t limit_train = 0; // 0 = use everything
    std::int64_t limit_test = 0;
    std::string train_classes; // optional comma list restricting training labels

    std::string conv_checkpoint;
    std::string checkpoint_in;
    std::string checkpoint_out;
    std::string metrics_out;
    std::string out_dir = ".";

    // engine scaling knobs
    double init_gain = 16.0;
    std::int32_t init_frac = 32;
    double err_gain = 1.0;
    double fa_theta_scale = 2.0;
    double dfa_gain = 0.75;
    double output_gain = 1.0;
    std::string pre_trace = "freeze";  // freeze | accumulate (ablation)
    bool error_clamp_zero = false;     // clamp error-path membranes at zero
    double fp_clip = 512.0;
    std::string oracle_mode = "relaxed"; // relaxed | floor
    // The oracle's real-valued arithmetic wants different wiring scales than
    // the 8-bit engine; negative values inherit the engine knob.
    double oracle_init_gain = 12.0;
    double oracle_err_gain = 0.5;
    double oracle_dfa_gain = 0.5;

    // mapping
    std::string neurons_per_core = "10"; // single value or comma list per layer
    std::string sweep_list = "1,2,5,10,20,50";
    std::int64_t core_max_compartments = 1024;
    std::int64_t core_max_synapses = 1'000'000;
    std::int64_t core_max_fanin = 4096;
    std::int64_t core_max_fanout = 4096;

    // incremental online learning
    std::string initial_classes = "0,1,2,3";
    std::string increments = "4,5;6,7;8,9";
    std::int32_t chunks_per_class = 5;
    std::int64_t chunk_size = 0; // samples per class per chunk; 0 = split evenly
    std::uint32_t step1_eta_shift_add = 2; // step-1 learning rate = eta / 4
    double rehearse_noise = 0.0;           // optional jitter on rehearsal samples

    NetworkSpec network_spec() const;
    EngineParams engine_params() const;
    OracleParams oracle_params() const;
    CoreConstraints core_constraints() const;
    std::vector<std::int64_t> l_m_policy(std::size_t num_layers) const;
};

void load_config_file(RunConfig &config, const std::string &path);
void set_config_value(RunConfig &config, const std::string &key, const std::string &value);

std::vector<std::int32_t> parse_class_list(const std::string &s);
std::vector<std::vector<std::int32_t>> parse_increments(const std::string &s);

Dataset load_train_dataset(const RunConfig &config);
Dataset load_test_dataset(const RunConfig &config);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::int64_t> per_class_count;
    std::int64_t samples = 0;
};

EvalResult evaluate_engine(Network &net, const Dataset &data,
        const std::vector<std::size_t> &indices, std::int32_t phase_len);
EvalResult evaluate_oracle(const FpNetwork &net, const Dataset &data,
        const std::vector<std::size_t> &indices, std::int32_t phase_len);

// Deterministic Fisher-Yates order for one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint32_t epoch, std::size_t n);

struct EpochMetrics {
    std::int32_t epoch = 0;
    std::int64_t samples_seen = 0;
    double test_accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::int64_t update_l1 = 0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> epochs;
    std::int64_t cores_used = 0;
    std::string checkpoint_path;
    std::string metrics_path;
    double final_accuracy() const
    {
        return epochs.empty() ? 0.0 : epochs.back().test_accuracy;
    }
};

TrainResult run_train(const RunConfig &config);
TrainResult run_oracle_train(const RunConfig &config);
EvalResult run_eval(const RunConfig &config);
EvalResult run_oracle_eval(const RunConfig &config);

struct IncrementalRound {
    std::int32_t increment = 0; // 0-based increment index
    std::int32_t round = 0;     // 0-based round within the increment
    std::int32_t step = 0;      // 1 = learn-new, 2 = rehearse
    std::vector<std::int32_t> observed;
    double accuracy = 0.0; // on test samples of observed classes
    std::vector<double> per_class_accuracy;
};

struct IncrementalResult {
    double pretrain_accuracy = 0.0; // on initial classes
    std::vector<IncrementalRound> rounds;
    double final_accuracy = 0.0; // all observed classes at the end
    std::string metrics_path;
};

IncrementalResult run_incremental(const RunConfig &config);

// Rehearsal draw for step 2: total samples balanced round-robin across the
// old-class pools (per-class counts differ by at most one), picks seeded.
std::vector<std::size_t> draw_rehearsal(const std::vector<std::vector<std::size_t>> &old_pools,
        std::size_t total, std::uint64_t seed, std::uint64_t &counter);

struct MapResult {
    std::int64_t cores_used = 0;
    std::string csv_path;
};

MapResult run_map(const RunConfig &config);
MapResult run_sweep(const RunConfig &config);

} // namespace emstdp
