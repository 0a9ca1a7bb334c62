#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emstdp/dataset.hpp"
#include "emstdp/harness.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitMap = 4;

void add_common_options(CLI::App *cmd, emstdp::RunConfig &cfg, std::string &config_path,
        std::vector<std::string> &overrides)
{
    cmd->add_option("--config", config_path, "key=value config file loaded before flag overrides");
    cmd->add_option("--set", overrides, "extra key=value overrides (repeatable)");

    cmd->add_option("--structure", cfg.structure, "network structure string")
            ->capture_default_str();
    cmd->add_option("--feedback", cfg.feedback, "feedback wiring: FA or DFA")
            ->capture_default_str();
    cmd->add_option("--phase-len,-T", cfg.phase_len, "phase length T in steps")
            ->capture_default_str();
    cmd->add_option("--theta", cfg.theta, "base firing threshold")->capture_default_str();
    cmd->add_option("--eta-num", cfg.eta_num, "learning rate numerator")->capture_default_str();
    cmd->add_option("--eta-shift", cfg.eta_shift, "learning rate = eta-num / 2^eta-shift")
            ->capture_default_str();
    cmd->add_option("--update-shift", cfg.update_shift,
               "extra right-shift converting rate products onto the weight grid")
            ->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "master seed")->capture_default_str();
    cmd->add_option("--rounding", cfg.rounding, "weight rounding: stochastic or nearest")
            ->capture_default_str();
    cmd->add_option("--train-images", cfg.train_images, "IDX training images");
    cmd->add_option("--train-labels", cfg.train_labels, "IDX training labels");
    cmd->add_option("--test-images", cfg.test_images, "IDX test images");
    cmd->add_option("--test-labels", cfg.test_labels, "IDX test labels");
    cmd->add_option("--train-csv", cfg.train_csv, "CSV training data (label,pixels...)");
    cmd->add_option("--test-csv", cfg.test_csv, "CSV test data (label,pixels...)");
    cmd->add_option("--csv-rows", cfg.csv_rows, "CSV image rows")->capture_default_str();
    cmd->add_option("--csv-cols", cfg.csv_cols, "CSV image cols")->capture_default_str();
    cmd->add_option("--synth-train", cfg.synth_train,
            "generate this many synthetic training digits instead of loading");
    cmd->add_option("--synth-test", cfg.synth_test, "generate this many synthetic test digits");
    cmd->add_option("--limit-train", cfg.limit_train, "cap on training samples (0 = all)")
            ->capture_default_str();
    cmd->add_option("--limit-test", cfg.limit_test, "cap on test samples (0 = all)")
            ->capture_default_str();
    cmd->add_option("--train-classes", cfg.train_classes,
            "comma list restricting training to these labels");
    cmd->add_option("--conv-checkpoint", cfg.conv_checkpoint, "pretrained conv kernels");
    cmd->add_option("--checkpoint-in", cfg.checkpoint_in, "checkpoint to load");
    cmd->add_option("--checkpoint-out", cfg.checkpoint_out, "checkpoint to write");
    cmd->add_option("--metrics-out", cfg.metrics_out, "metrics CSV path");
    cmd->add_option("--out-dir", cfg.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--init-gain", cfg.init_gain, "forward threshold scale knob")
            ->capture_default_str();
    cmd->add_option("--init-frac", cfg.init_frac, "initial weight range in 8-bit units")
            ->capture_default_str();
    cmd->add_option("--err-gain", cfg.err_gain, "error injection gain in theta/T units")
            ->capture_default_str();
    cmd->add_option("--fa-theta-scale", cfg.fa_theta_scale, "FA error-neuron threshold scale")
            ->capture_default_str();
    cmd->add_option("--dfa-gain", cfg.dfa_gain, "DFA broadcast gain in theta/T units")
            ->capture_default_str();
    cmd->add_option("--output-gain", cfg.output_gain, "extra output-layer threshold gain")
            ->capture_default_str();
    cmd->add_option("--pre-trace", cfg.pre_trace,
               "pre-trace mode: freeze (at the phase boundary) or accumulate (ablation)")
            ->capture_default_str();
    cmd->add_flag("--error-clamp-zero", cfg.error_clamp_zero,
            "clamp error-path membranes at zero (sensitivity experiment)");
    cmd->add_option("--fp-clip", cfg.fp_clip, "oracle weight clip")->capture_default_str();
    cmd->add_option("--oracle-mode", cfg.oracle_mode, "oracle activation: relaxed or floor")
            ->capture_default_str();
    cmd->add_option("--oracle-init-gain", cfg.oracle_init_gain,
               "oracle threshold scale (<= 0: inherit --init-gain)")
            ->capture_default_str();
    cmd->add_option("--oracle-err-gain", cfg.oracle_err_gain,
               "oracle injection gain (<= 0: inherit --err-gain)")
            ->capture_default_str();
    cmd->add_option("--oracle-dfa-gain", cfg.oracle_dfa_gain,
               "oracle DFA gain (<= 0: inherit --dfa-gain)")
            ->capture_default_str();
    cmd->add_option("--neurons-per-core", cfg.neurons_per_core,
               "l_m packing (single value or per-layer comma list)")
            ->capture_default_str();
    cmd->add_option("--sweep-list", cfg.sweep_list, "comma list of l_m values for sweep")
            ->capture_default_str();
    cmd->add_option("--core-max-compartments", cfg.core_max_compartments,
               "core compartment capacity")
            ->capture_default_str();
    cmd->add_option("--core-max-synapses", cfg.core_max_synapses, "core synapse capacity")
            ->capture_default_str();
    cmd->add_option("--core-max-fanin", cfg.core_max_fanin, "core fan-in (distinct sources)")
            ->capture_default_str();
    cmd->add_option("--core-max-fanout", cfg.core_max_fanout, "core fan-out (distinct targets)")
            ->capture_default_str();
    cmd->add_option("--initial-classes", cfg.initial_classes, "incremental: pretrained classes")
            ->capture_default_str();
    cmd->add_option("--increments", cfg.increments,
               "incremental: class groups per iteration, ';' separated")
            ->capture_default_str();
    cmd->add_option("--chunks-per-class", cfg.chunks_per_class, "incremental rounds per iteration")
            ->capture_default_str();
    cmd->add_option("--chunk-size", cfg.chunk_size,
               "samples per class per chunk (0 = split evenly)")
            ->capture_default_str();
    cmd->add_option("--step1-eta-shift-add", cfg.step1_eta_shift_add,
               "extra eta shift during step 1 (default = eta/4)")
            ->capture_default_str();
    cmd->add_option("--rehearse-noise", cfg.rehearse_noise,
               "optional jitter on rehearsal samples, fraction of T")
            ->capture_default_str();
}

void apply_overrides(emstdp::RunConfig &cfg, const std::string &config_path,
        const std::vector<std::string> &overrides)
{
    if (!config_path.empty()) {
        emstdp::load_config_file(cfg, config_path);
    }
    for (const std::string &kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw emstdp::ConfigError("--set expects key=value, got: " + kv);
        }
        emstdp::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

void print_eval(const emstdp::EvalResult &r)
{
    std::printf("samples %lld accuracy %.4f\n", static_cast<long long>(r.samples), r.accuracy);
    for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c) {
        if (r.per_class_count[c] > 0) {
            std::printf("  class %zu: %.4f (%lld samples)\n", c, r.per_class_accuracy[c],
                    static_cast<long long>(r.per_class_count[c]));
        }
    }
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"emstdp: spiking-substrate simulator with two-phase local learning"};
    app.require_subcommand(1);

    emstdp::RunConfig cfg;
    std::string config_path;
    std::vector<std::string> overrides;

    CLI::App *c_train = app.add_subcommand("train", "train the quantized engine");
    CLI::App *c_eval = app.add_subcommand("eval", "evaluate an engine checkpoint");
    CLI::App *c_map = app.add_subcommand("map", "map the network onto cores");
    CLI::App *c_sweep = app.add_subcommand("sweep", "sweep neurons-per-core packing");
    CLI::App *c_incr = app.add_subcommand("incremental", "incremental online learning protocol");
    CLI::App *c_otrain = app.add_subcommand("oracle-train", "train the full-precision oracle");
    CLI::App *c_oeval = app.add_subcommand("oracle-eval", "evaluate a checkpoint with the oracle");
    CLI::App *c_gen = app.add_subcommand("gen", "write a synthetic digit dataset as IDX files");

    for (CLI::App *cmd : {c_train, c_eval, c_map, c_sweep, c_incr, c_otrain, c_oeval}) {
        add_common_options(cmd, cfg, config_path, overrides);
    }

    std::string gen_dir = "data";
    std::int64_t gen_train = 60000;
    std::int64_t gen_test = 10000;
    std::uint64_t gen_seed = 42;
    c_gen->add_option("--out-dir", gen_dir, "directory for the IDX files")->capture_default_str();
    c_gen->add_option("--train", gen_train, "training sample count")->capture_default_str();
    c_gen->add_option("--test", gen_test, "test sample count")->capture_default_str();
    c_gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(c_gen)) {
            namespace fs = std::filesystem;
            fs::create_directories(gen_dir);
            const emstdp::Dataset train =
                    emstdp::generate_synthetic_digits(gen_seed, static_cast<std::size_t>(gen_train));
            const emstdp::Dataset test = emstdp::generate_synthetic_digits(gen_seed + 1,
                    static_cast<std::size_t>(gen_test));
            auto path = [&](const char *n) { return (fs::path(gen_dir) / n).string(); };
            emstdp::write_idx_images(path("train-images-idx3-ubyte"), train.pixels,
                    static_cast<std::int32_t>(train.size()), 28, 28);
            std::vector<std::uint8_t> lab(train.labels.begin(), train.labels.end());
            emstdp::write_idx_labels(path("train-labels-idx1-ubyte"), lab);
            emstdp::write_idx_images(path("t10k-images-idx3-ubyte"), test.pixels,
                    static_cast<std::int32_t>(test.size()), 28, 28);
            lab.assign(test.labels.begin(), test.labels.end());
            emstdp::write_idx_labels(path("t10k-labels-idx1-ubyte"), lab);
            std::printf("wrote %lld train / %lld test synthetic digits under %s\n",
                    static_cast<long long>(gen_train), static_cast<long long>(gen_test),
                    gen_dir.c_str());
            return 0;
        }

        apply_overrides(cfg, config_path, overrides);

        if (app.got_subcommand(c_train)) {
            const emstdp::TrainResult r = emstdp::run_train(cfg);
            for (const emstdp::EpochMetrics &m : r.epochs) {
                std::printf("epoch %d accuracy %.4f (update_l1 %lld, %.1fs)\n", m.epoch,
                        m.test_accuracy, static_cast<long long>(m.update_l1), m.wall_seconds);
            }
            std::printf("cores_used %lld\ncheckpoint %s\nmetrics %s\n",
                    static_cast<long long>(r.cores_used), r.checkpoint_path.c_str(),
                    r.metrics_path.c_str());
        } else if (app.got_subcommand(c_eval)) {
            print_eval(emstdp::run_eval(cfg));
        } else if (app.got_subcommand(c_map)) {
            const emstdp::MapResult r = emstdp::run_map(cfg);
            std::printf("cores_used %lld\ncsv %s\n", static_cast<long long>(r.cores_used),
                    r.csv_path.c_str());
        } else if (app.got_subcommand(c_sweep)) {
            const emstdp::MapResult r = emstdp::run_sweep(cfg);
            std::printf("csv %s\n", r.csv_path.c_str());
        } else if (app.got_subcommand(c_incr)) {
            const emstdp::IncrementalResult r = emstdp::run_incremental(cfg);
            std::printf("pretrain accuracy %.4f\n", r.pretrain_accuracy);
            for (const emstdp::IncrementalRound &round : r.rounds) {
                std::printf("increment %d round %d step %d accuracy %.4f\n", round.increment,
                        round.round, round.step, round.accuracy);
            }
            std::printf("final accuracy %.4f\nmetrics %s\n", r.final_accuracy,
                    r.metrics_path.c_str());
        } else if (app.got_subcommand(c_otrain)) {
            const emstdp::TrainResult r = emstdp::run_oracle_train(cfg);
            for (const emstdp::EpochMetrics &m : r.epochs) {
                std::printf("epoch %d accuracy %.4f (%.1fs)\n", m.epoch, m.test_accuracy,
                        m.wall_seconds);
            }
            std::printf("checkpoint %s\nmetrics %s\n", r.checkpoint_path.c_str(),
                    r.metrics_path.c_str());
        } else if (app.got_subcommand(c_oeval)) {
            print_eval(emstdp::run_oracle_eval(cfg));
        }
        return 0;
    } catch (const emstdp::ConfigError &e) {
        std::fprintf(stderr, "error(config): %s\n", e.what());
        return kExitConfig;
    } catch (const emstdp::DataError &e) {
        std::fprintf(stderr, "error(data): %s\n", e.what());
        return kExitData;
    } catch (const emstdp::MapError &e) {
        std::fprintf(stderr, "error(mapping): %s\n", e.what());
        return kExitMap;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
