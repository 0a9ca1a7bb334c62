#include "emstdp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "emstdp/checkpoint.hpp"
#include "emstdp/rng.hpp"

namespace emstdp {

namespace {

Rounding parse_rounding(const std::string &s)
{
    if (s == "stochastic") {
        return Rounding::stochastic;
    }
    if (s == "nearest") {
        return Rounding::nearest;
    }
    throw ConfigError("unknown rounding mode: " + s);
}

std::vector<std::int64_t> parse_int_list(const std::string &s)
{
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) {
            out.push_back(std::stoll(tok));
        }
    }
    return out;
}

std::string join_path(const std::string &dir, const std::string &name)
{
    return (std::filesystem::path(dir) / name).string();
}

double now_seconds()
{
    return std::chrono::duration<double>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count();
}

} // namespace

NetworkSpec RunConfig::network_spec() const
{
    try {
        return make_network_spec(structure, feedback_mode_from_string(feedback), phase_len, theta);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(e.what());
    }
}

EngineParams RunConfig::engine_params() const
{
    EngineParams p;
    p.quant.init_gain = init_gain;
    p.quant.init_frac = init_frac;
    p.quant.err_gain = err_gain;
    p.quant.fa_theta_scale = fa_theta_scale;
    p.quant.dfa_gain = dfa_gain;
    p.quant.output_gain = output_gain;
    p.learn.eta_num = eta_num;
    p.learn.eta_shift = eta_shift;
    p.learn.update_shift = update_shift;
    p.learn.rounding = parse_rounding(rounding);
    p.learn.seed = seed;
    if (pre_trace == "freeze") {
        p.pre_trace = PreTraceMode::freeze_at_boundary;
    } else if (pre_trace == "accumulate") {
        p.pre_trace = PreTraceMode::accumulate_2t;
    } else {
        throw ConfigError("unknown pre_trace mode: " + pre_trace);
    }
    p.error_clamp_zero = error_clamp_zero;
    return p;
}

OracleParams RunConfig::oracle_params() const
{
    OracleParams p;
    p.quant = engine_params().quant;
    if (oracle_init_gain > 0.0) {
        p.quant.init_gain = oracle_init_gain;
    }
    if (oracle_err_gain > 0.0) {
        p.quant.err_gain = oracle_err_gain;
    }
    if (oracle_dfa_gain > 0.0) {
        p.quant.dfa_gain = oracle_dfa_gain;
    }
    p.weight_clip = fp_clip;
    if (oracle_mode == "relaxed") {
        p.mode = ActivationMode::relaxed;
    } else if (oracle_mode == "floor") {
        p.mode = ActivationMode::floor;
    } else {
        throw ConfigError("unknown oracle mode: " + oracle_mode);
    }
    return p;
}

CoreConstraints RunConfig::core_constraints() const
{
    CoreConstraints c;
    c.max_compartments_per_core = core_max_compartments;
    c.max_synapses_per_core = core_max_synapses;
    c.max_fanin_per_core = core_max_fanin;
    c.max_fanout_per_core = core_max_fanout;
    return c;
}

std::vector<std::int64_t> RunConfig::l_m_policy(std::size_t num_layers) const
{
    std::vector<std::int64_t> lm = parse_int_list(neurons_per_core);
    if (lm.empty()) {
        throw ConfigError("neurons_per_core must hold at least one value");
    }
    if (lm.size() == 1) {
        lm.assign(num_layers, lm[0]);
    }
    if (lm.size() != num_layers) {
        throw ConfigError("neurons_per_core must hold one value or one per layer");
    }
    return lm;
}

void set_config_value(RunConfig &c, const std::string &key, const std::string &value)
{
    auto as_i64 = [&]() { return std::stoll(value); };
    auto as_i32 = [&]() { return static_cast<std::int32_t>(std::stol(value)); };
    auto as_u32 = [&]() { return static_cast<std::uint32_t>(std::stoul(value)); };
    auto as_u64 = [&]() { return static_cast<std::uint64_t>(std::stoull(value)); };
    auto as_f = [&]() { return std::stod(value); };

    if (key == "structure") c.structure = value;
    else if (key == "feedback") c.feedback = value;
    else if (key == "phase_len" || key == "T") c.phase_len = as_i32();
    else if (key == "theta") c.theta = as_i64();
    else if (key == "eta_num") c.eta_num = as_i64();
    else if (key == "eta_shift") c.eta_shift = as_u32();
    else if (key == "update_shift") c.update_shift = as_u32();
    else if (key == "epochs") c.epochs = as_i32();
    else if (key == "seed") c.seed = as_u64();
    else if (key == "rounding") c.rounding = value;
    else if (key == "train_images") c.train_images = value;
    else if (key == "train_labels") c.train_labels = value;
    else if (key == "test_images") c.test_images = value;
    else if (key == "test_labels") c.test_labels = value;
    else if (key == "train_csv") c.train_csv = value;
    else if (key == "test_csv") c.test_csv = value;
    else if (key == "csv_rows") c.csv_rows = as_i32();
    else if (key == "csv_cols") c.csv_cols = as_i32();
    else if (key == "synth_train") c.synth_train = as_i64();
    else if (key == "synth_test") c.synth_test = as_i64();
    else if (key == "limit_train") c.limit_train = as_i64();
    else if (key == "limit_test") c.limit_test = as_i64();
    else if (key == "train_classes") c.train_classes = value;
    else if (key == "conv_checkpoint") c.conv_checkpoint = value;
    else if (key == "checkpoint_in") c.checkpoint_in = value;
    else if (key == "checkpoint_out") c.checkpoint_out = value;
    else if (key == "metrics_out") c.metrics_out = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "init_gain") c.init_gain = as_f();
    else if (key == "init_frac") c.init_frac = as_i32();
    else if (key == "err_gain") c.err_gain = as_f();
    else if (key == "fa_theta_scale") c.fa_theta_scale = as_f();
    else if (key == "dfa_gain") c.dfa_gain = as_f();
    else if (key == "output_gain") c.output_gain = as_f();
    else if (key == "pre_trace") c.pre_trace = value;
    else if (key == "error_clamp_zero") c.error_clamp_zero = value == "1" || value == "true";
    else if (key == "fp_clip") c.fp_clip = as_f();
    else if (key == "oracle_mode") c.oracle_mode = value;
    else if (key == "oracle_init_gain") c.oracle_init_gain = as_f();
    else if (key == "oracle_err_gain") c.oracle_err_gain = as_f();
    else if (key == "oracle_dfa_gain") c.oracle_dfa_gain = as_f();
    else if (key == "neurons_per_core") c.neurons_per_core = value;
    else if (key == "sweep_list") c.sweep_list = value;
    else if (key == "core_max_compartments") c.core_max_compartments = as_i64();
    else if (key == "core_max_synapses") c.core_max_synapses = as_i64();
    else if (key == "core_max_fanin") c.core_max_fanin = as_i64();
    else if (key == "core_max_fanout") c.core_max_fanout = as_i64();
    else if (key == "initial_classes") c.initial_classes = value;
    else if (key == "increments") c.increments = value;
    else if (key == "chunks_per_class") c.chunks_per_class = as_i32();
    else if (key == "chunk_size") c.chunk_size = as_i64();
    else if (key == "step1_eta_shift_add") c.step1_eta_shift_add = as_u32();
    else if (key == "rehearse_noise") c.rehearse_noise = as_f();
    else throw ConfigError("unknown config key: " + key);
}

void load_config_file(RunConfig &config, const std::string &path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ": malformed line " + std::to_string(lineno)
                    + " (expected key=value)");
        }
        set_config_value(config, line.substr(0, eq), line.substr(eq + 1));
    }
}

std::vector<std::int32_t> parse_class_list(const std::string &s)
{
    std::vector<std::int32_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) {
            out.push_back(std::stoi(tok));
        }
    }
    return out;
}

std::vector<std::vector<std::int32_t>> parse_increments(const std::string &s)
{
    std::vector<std::vector<std::int32_t>> out;
    std::stringstream ss(s);
    std::string group;
    while (std::getline(ss, group, ';')) {
        if (!group.empty()) {
            out.push_back(parse_class_list(group));
        }
    }
    return out;
}

namespace {

Dataset load_split(const RunConfig &c, bool train)
{
    const std::string &images = train ? c.train_images : c.test_images;
    const std::string &labels = train ? c.train_labels : c.test_labels;
    const std::string &csv = train ? c.train_csv : c.test_csv;
    const std::int64_t synth = train ? c.synth_train : c.synth_test;
    try {
        if (!images.empty() || !labels.empty()) {
            if (images.empty() || labels.empty()) {
                throw DataError("both image and label IDX paths are required");
            }
            return load_idx_dataset(images, labels);
        }
        if (!csv.empty()) {
            return load_csv_dataset(csv, c.csv_rows, c.csv_cols);
        }
        if (synth > 0) {
            return generate_synthetic_digits(c.seed + (train ? 0 : 1),
                    static_cast<std::size_t>(synth));
        }
    } catch (const DataError &) {
        throw;
    } catch (const std::exception &e) {
        throw DataError(e.what());
    }
    throw DataError(std::string("no ") + (train ? "training" : "test")
            + " dataset configured (IDX, CSV or synth)");
}

} // namespace

Dataset load_train_dataset(const RunConfig &config)
{
    return load_split(config, true);
}

Dataset load_test_dataset(const RunConfig &config)
{
    return load_split(config, false);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint32_t epoch, std::size_t n)
{
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    for (std::size_t i = n; i-- > 1;) {
        const std::uint64_t counter = (static_cast<std::uint64_t>(epoch) << 40) | i;
        const std::size_t j = static_cast<std::size_t>(
                rng::uniform_int(seed, rng::Stream::shuffle, counter, 0,
                        static_cast<std::int64_t>(i)));
        std::swap(order[i], order[j]);
    }
    return order;
}

namespace {

EvalResult tally_eval(std::int32_t classes)
{
    EvalResult r;
    r.per_class_accuracy.assign(classes, 0.0);
    r.per_class_count.assign(classes, 0);
    return r;
}

void finish_eval(EvalResult &r, const std::vector<std::int64_t> &correct)
{
    std::int64_t total_correct = 0;
    for (std::size_t c = 0; c < correct.size(); ++c) {
        total_correct += correct[c];
        r.per_class_accuracy[c] = r.per_class_count[c] > 0
                ? static_cast<double>(correct[c]) / static_cast<double>(r.per_class_count[c])
                : 0.0;
    }
    r.accuracy = r.samples > 0 ? static_cast<double>(total_correct)
                    / static_cast<double>(r.samples)
                               : 0.0;
}

} // namespace

EvalResult evaluate_engine(Network &net, const Dataset &data,
        const std::vector<std::size_t> &indices, std::int32_t phase_len)
{
    if (indices.empty()) {
        throw DataError("evaluation requires a non-empty test set");
    }
    const std::int32_t classes = net.spec().num_classes();
    EvalResult r = tally_eval(classes);
    std::vector<std::int64_t> correct(classes, 0);
    for (const std::size_t idx : indices) {
        const SamplePresentation s = dataset_sample(data, idx, phase_len, false);
        const std::int32_t pred = net.infer_sample(s);
        const std::int32_t label = data.labels[idx];
        if (label >= 0 && label < classes) {
            ++r.per_class_count[label];
            if (pred == label) {
                ++correct[label];
            }
        }
        ++r.samples;
    }
    finish_eval(r, correct);
    return r;
}

EvalResult evaluate_oracle(const FpNetwork &net, const Dataset &data,
        const std::vector<std::size_t> &indices, std::int32_t phase_len)
{
    if (indices.empty()) {
        throw DataError("evaluation requires a non-empty test set");
    }
    const std::int32_t classes = net.spec.num_classes();
    EvalResult r = tally_eval(classes);
    std::vector<std::int64_t> correct(classes, 0);
    std::vector<double> x(static_cast<std::size_t>(net.spec.layers[0].size()));
    for (const std::size_t idx : indices) {
        const SamplePresentation s = dataset_sample(data, idx, phase_len, false);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = static_cast<double>(s.input[i]);
        }
        const std::int32_t pred = fp_predict(net, x);
        const std::int32_t label = data.labels[idx];
        if (label >= 0 && label < classes) {
            ++r.per_class_count[label];
            if (pred == label) {
                ++correct[label];
            }
        }
        ++r.samples;
    }
    finish_eval(r, correct);
    return r;
}

namespace {

std::vector<std::size_t> select_indices(const Dataset &data, std::int64_t limit,
        const std::vector<std::int32_t> &class_filter)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!class_filter.empty()
                && std::find(class_filter.begin(), class_filter.end(), data.labels[i])
                        == class_filter.end()) {
            continue;
        }
        idx.push_back(i);
        if (limit > 0 && idx.size() == static_cast<std::size_t>(limit)) {
            break;
        }
    }
    return idx;
}

void write_metrics_csv(const std::string &path, const std::vector<EpochMetrics> &rows,
        std::int64_t cores_used, std::int32_t classes)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write metrics file: " + path);
    }
    out << "# emstdp-metrics v1\n";
    out << "epoch,samples_seen,test_accuracy";
    for (std::int32_t c = 0; c < classes; ++c) {
        out << ",acc_class_" << c;
    }
    out << ",update_l1,cores_used,wall_s\n";
    for (const EpochMetrics &m : rows) {
        out << m.epoch << "," << m.samples_seen << "," << m.test_accuracy;
        for (const double a : m.per_class_accuracy) {
            out << "," << a;
        }
        out << "," << m.update_l1 << "," << cores_used << "," << m.wall_seconds << "\n";
    }
}

} // namespace

TrainResult run_train(const RunConfig &config)
{
    const NetworkSpec spec = config.network_spec();
    const Dataset train = load_train_dataset(config);
    const Dataset test = load_test_dataset(config);
    if (train.size() == 0) {
        throw DataError("training dataset is empty");
    }

    Network net = Network::build(spec, config.seed, config.engine_params());
    if (!config.conv_checkpoint.empty()) {
        load_conv_checkpoint(config.conv_checkpoint, net);
    }
    if (!config.checkpoint_in.empty()) {
        load_checkpoint(config.checkpoint_in, net);
    }

    TrainResult result;
    try {
        const NetworkGraph graph = make_graph(net);
        const CoreMap map = map_network(graph, config.core_constraints(),
                config.l_m_policy(spec.num_layers()));
        result.cores_used = map.cores_used();
    } catch (const std::exception &e) {
        throw MapError(e.what());
    }

    const std::vector<std::int32_t> class_filter = parse_class_list(config.train_classes);
    const std::vector<std::size_t> train_idx =
            select_indices(train, config.limit_train, class_filter);
    const std::vector<std::size_t> test_idx = select_indices(test, config.limit_test, {});
    if (train_idx.empty()) {
        throw DataError("no training samples after filtering");
    }
    if (!class_filter.empty()) {
        // Restricting the task to a class subset detaches the other output
        // neurons: frozen and with zeroed synapses they stay silent instead
        // of competing as random rivals or collecting blind depression.
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.num_classes()), 0);
        for (const std::int32_t c : class_filter) {
            if (c >= 0 && c < spec.num_classes()) {
                mask[c] = 1;
            }
        }
        DenseConn &out_conn = net.mutable_dense_conns().back();
        for (std::int32_t j = 0; j < out_conn.cols; ++j) {
            if (!mask[j]) {
                for (std::int32_t i = 0; i < out_conn.rows; ++i) {
                    out_conn.at(i, j) = 0;
                }
            }
        }
        net.set_output_mask(std::move(mask));
    }

    std::filesystem::create_directories(config.out_dir);
    const double t0 = now_seconds();
    for (std::int32_t epoch = 0; epoch < std::max(config.epochs, 0); ++epoch) {
        const auto order = epoch_order(config.seed, static_cast<std::uint32_t>(epoch),
                train_idx.size());
        EpochMetrics m;
        m.epoch = epoch;
        for (const std::size_t o : order) {
            const SampleMetrics sm = net.train_sample(
                    dataset_sample(train, train_idx[o], spec.phase_len, true));
            m.update_l1 += sm.update_l1;
        }
        m.samples_seen = static_cast<std::int64_t>((epoch + 1) * train_idx.size());
        const EvalResult ev = evaluate_engine(net, test, test_idx, spec.phase_len);
        m.test_accuracy = ev.accuracy;
        m.per_class_accuracy = ev.per_class_accuracy;
        m.wall_seconds = now_seconds() - t0;
        result.epochs.push_back(std::move(m));
    }
    if (config.epochs <= 0) {
        EpochMetrics m;
        m.epoch = 0;
        const EvalResult ev = evaluate_engine(net, test, test_idx, spec.phase_len);
        m.test_accuracy = ev.accuracy;
        m.per_class_accuracy = ev.per_class_accuracy;
        m.wall_seconds = now_seconds() - t0;
        result.epochs.push_back(std::move(m));
    }

    result.checkpoint_path = config.checkpoint_out.empty()
            ? join_path(config.out_dir, "checkpoint.emstdp")
            : config.checkpoint_out;
    save_checkpoint(result.checkpoint_path, net);
    result.metrics_path = config.metrics_out.empty() ? join_path(config.out_dir, "metrics.csv")
                                                     : config.metrics_out;
    write_metrics_csv(result.metrics_path, result.epochs, result.cores_used, spec.num_classes());
    return result;
}

TrainResult run_oracle_train(const RunConfig &config)
{
    const NetworkSpec spec = config.network_spec();
    const Dataset train = load_train_dataset(config);
    const Dataset test = load_test_dataset(config);

    FpNetwork net = build_fp_network(spec, config.seed, config.oracle_params());
    if (!config.checkpoint_in.empty()) {
        load_fp_checkpoint(config.checkpoint_in, net);
    }
    const double eta = static_cast<double>(config.eta_num)
            / static_cast<double>(std::int64_t{1} << config.eta_shift);

    const std::vector<std::size_t> train_idx =
            select_indices(train, config.limit_train, parse_class_list(config.train_classes));
    const std::vector<std::size_t> test_idx = select_indices(test, config.limit_test, {});
    if (train_idx.empty()) {
        throw DataError("no training samples after filtering");
    }

    std::filesystem::create_directories(config.out_dir);
    TrainResult result;
    std::vector<double> x(static_cast<std::size_t>(spec.layers[0].size()));
    const double t0 = now_seconds();
    for (std::int32_t epoch = 0; epoch < std::max(config.epochs, 0); ++epoch) {
        const auto order = epoch_order(config.seed, static_cast<std::uint32_t>(epoch),
                train_idx.size());
        EpochMetrics m;
        m.epoch = epoch;
        for (const std::size_t o : order) {
            const std::size_t idx = train_idx[o];
            const SamplePresentation s = dataset_sample(train, idx, spec.phase_len, true);
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = static_cast<double>(s.input[i]);
            }
            const LayerDeltas d = fp_emstdp_step(net, x, *s.label, eta, spec.feedback_mode);
            fp_apply_deltas(net, d);
        }
        m.samples_seen = static_cast<std::int64_t>((epoch + 1) * train_idx.size());
        const EvalResult ev = evaluate_oracle(net, test, test_idx, spec.phase_len);
        m.test_accuracy = ev.accuracy;
        m.per_class_accuracy = ev.per_class_accuracy;
        m.wall_seconds = now_seconds() - t0;
        result.epochs.push_back(std::move(m));
    }
    if (config.epochs <= 0) {
        EpochMetrics m;
        m.epoch = 0;
        const EvalResult ev = evaluate_oracle(net, test, test_idx, spec.phase_len);
        m.test_accuracy = ev.accuracy;
        m.per_class_accuracy = ev.per_class_accuracy;
        m.wall_seconds = now_seconds() - t0;
        result.epochs.push_back(std::move(m));
    }

    result.checkpoint_path = config.checkpoint_out.empty()
            ? join_path(config.out_dir, "oracle.emstdp")
            : config.checkpoint_out;
    save_fp_checkpoint(result.checkpoint_path, net);
    result.metrics_path = config.metrics_out.empty()
            ? join_path(config.out_dir, "oracle_metrics.csv")
            : config.metrics_out;
    write_metrics_csv(result.metrics_path, result.epochs, 0, spec.num_classes());
    return result;
}

EvalResult run_eval(const RunConfig &config)
{
    if (config.checkpoint_in.empty()) {
        throw ConfigError("eval requires checkpoint_in");
    }
    const NetworkSpec spec = config.network_spec();
    const Dataset test = load_test_dataset(config);
    Network net = Network::build(spec, config.seed, config.engine_params());
    if (!config.conv_checkpoint.empty()) {
        load_conv_checkpoint(config.conv_checkpoint, net);
    }
    load_checkpoint(config.checkpoint_in, net);
    const std::vector<std::size_t> test_idx = select_indices(test, config.limit_test, {});
    return evaluate_engine(net, test, test_idx, spec.phase_len);
}

EvalResult run_oracle_eval(const RunConfig &config)
{
    if (config.checkpoint_in.empty()) {
        throw ConfigError("oracle-eval requires checkpoint_in");
    }
    const NetworkSpec spec = config.network_spec();
    const Dataset test = load_test_dataset(config);
    FpNetwork net = build_fp_network(spec, config.seed, config.oracle_params());
    const std::string kind = checkpoint_payload_kind(config.checkpoint_in);
    if (kind == "f32") {
        load_fp_checkpoint(config.checkpoint_in, net);
    } else if (kind == "int8") {
        load_checkpoint_into_fp(config.checkpoint_in, net);
    } else {
        throw DataError("oracle-eval cannot use payload kind " + kind);
    }
    const std::vector<std::size_t> test_idx = select_indices(test, config.limit_test, {});
    return evaluate_oracle(net, test, test_idx, spec.phase_len);
}

namespace {

struct IncrementalWriter {
    std::ofstream out;

    explicit IncrementalWriter(const std::string &path) : out(path)
    {
        if (!out) {
            throw DataError("cannot write incremental metrics: " + path);
        }
        out << "# emstdp-incremental v1\n";
        out << "increment,round,step,observed,accuracy,per_class\n";
    }

    void row(const IncrementalRound &r)
    {
        out << r.increment << "," << r.round << "," << r.step << ",";
        for (std::size_t i = 0; i < r.observed.size(); ++i) {
            out << (i ? " " : "") << r.observed[i];
        }
        out << "," << r.accuracy << ",";
        for (std::size_t i = 0; i < r.per_class_accuracy.size(); ++i) {
            out << (i ? " " : "") << r.per_class_accuracy[i];
        }
        out << "\n";
    }
};

std::vector<std::size_t> class_indices(const Dataset &data, std::int32_t cls)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.labels[i] == cls) {
            idx.push_back(i);
        }
    }
    return idx;
}

} // namespace

IncrementalResult run_incremental(const RunConfig &config)
{
    if (config.checkpoint_in.empty()) {
        throw ConfigError("incremental requires a pretrained checkpoint (checkpoint_in)");
    }
    const NetworkSpec spec = config.network_spec();
    const std::int32_t classes = spec.num_classes();
    const Dataset train = load_train_dataset(config);
    const Dataset test = load_test_dataset(config);

    std::vector<std::int32_t> observed = parse_class_list(config.initial_classes);
    const auto increments = parse_increments(config.increments);
    {
        std::vector<bool> seen(static_cast<std::size_t>(classes), false);
        auto check = [&](std::int32_t c) {
            if (c < 0 || c >= classes || seen[c]) {
                throw ConfigError("incremental classes must be distinct and within range");
            }
            seen[c] = true;
        };
        for (const std::int32_t c : observed) {
            check(c);
        }
        for (const auto &inc : increments) {
            for (const std::int32_t c : inc) {
                check(c);
            }
        }
    }

    Network net = Network::build(spec, config.seed, config.engine_params());
    load_checkpoint(config.checkpoint_in, net);

    std::filesystem::create_directories(config.out_dir);
    IncrementalResult result;
    result.metrics_path = config.metrics_out.empty()
            ? join_path(config.out_dir, "incremental.csv")
            : config.metrics_out;
    IncrementalWriter writer(result.metrics_path);

    auto eval_observed = [&](const std::vector<std::int32_t> &obs) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < test.size(); ++i) {
            if (std::find(obs.begin(), obs.end(), test.labels[i]) != obs.end()) {
                idx.push_back(i);
                if (config.limit_test > 0
                        && idx.size() == static_cast<std::size_t>(config.limit_test)) {
                    break;
                }
            }
        }
        return evaluate_engine(net, test, idx, spec.phase_len);
    };

    result.pretrain_accuracy = eval_observed(observed).accuracy;

    const LearningParams base_learn = config.engine_params().learn;
    LearningParams step1_learn = base_learn;
    step1_learn.eta_shift = base_learn.eta_shift + config.step1_eta_shift_add;

    // Per-class chunk partitions covering each class's samples exactly once.
    auto chunks_of = [&](std::int32_t cls) {
        std::vector<std::size_t> all = class_indices(train, cls);
        if (all.empty()) {
            throw DataError("incremental schedule class " + std::to_string(cls)
                    + " has no training samples");
        }
        if (config.chunk_size > 0) {
            const std::size_t need = static_cast<std::size_t>(config.chunk_size)
                    * config.chunks_per_class;
            if (all.size() > need) {
                all.resize(need);
            }
        }
        std::vector<std::vector<std::size_t>> chunks(config.chunks_per_class);
        const std::size_t n = all.size();
        for (std::int32_t r = 0; r < config.chunks_per_class; ++r) {
            const std::size_t lo = n * r / config.chunks_per_class;
            const std::size_t hi = n * (r + 1) / config.chunks_per_class;
            chunks[r].assign(all.begin() + lo, all.begin() + hi);
        }
        return chunks;
    };

    std::uint64_t rehearse_counter = 0;
    std::uint32_t shuffle_epoch = 1000;

    auto train_on = [&](std::vector<std::size_t> idx, std::vector<std::size_t> noisy_from) {
        // noisy_from marks (by position in idx) rehearsal samples that may be
        // perturbed; empty = train verbatim.
        const auto order = epoch_order(config.seed, shuffle_epoch++, idx.size());
        for (const std::size_t o : order) {
            SamplePresentation s = dataset_sample(train, idx[o], spec.phase_len, true);
            if (!noisy_from.empty() && noisy_from[o] && config.rehearse_noise > 0.0) {
                for (auto &v : s.input) {
                    const double jitter = rng::uniform_sym(config.seed, rng::Stream::misc,
                            rehearse_counter++, config.rehearse_noise * spec.phase_len);
                    v = std::clamp<std::int32_t>(
                            v + static_cast<std::int32_t>(std::lround(jitter)), 0,
                            spec.phase_len);
                }
            }
            net.train_sample(s);
        }
    };

    for (std::size_t inc = 0; inc < increments.size(); ++inc) {
        const std::vector<std::int32_t> &new_classes = increments[inc];
        std::vector<std::int32_t> observed_new = observed;
        observed_new.insert(observed_new.end(), new_classes.begin(), new_classes.end());
        std::sort(observed_new.begin(), observed_new.end());

        std::vector<std::vector<std::vector<std::size_t>>> new_chunks;
        for (const std::int32_t c : new_classes) {
            new_chunks.push_back(chunks_of(c));
        }

        // Allocate the new classifier units. Optimistic non-negative
        // synapses make the new outputs fire so their error gates open, but
        // only moderately: the amplitude targets a drive of about 1.5x the
        // output threshold for typical presynaptic activity, measured on a
        // few upcoming samples, so depression can prune the wrong responses
        // without destabilizing the hidden layer.
        {
            DenseConn &out_conn = net.mutable_dense_conns().back();
            const std::size_t pre_layer = static_cast<std::size_t>(out_conn.src_layer);
            double mean_pre_sum = 0.0;
            int probed = 0;
            for (const auto &per_class : new_chunks) {
                for (std::size_t k = 0; k < per_class[0].size() && probed < 8; ++k, ++probed) {
                    const TraceSnapshot t = net.run_phase1_with(
                            dataset_sample(train, per_class[0][k], spec.phase_len, false));
                    net.reset_all();
                    for (const std::int32_t h : t.h[pre_layer]) {
                        mean_pre_sum += h;
                    }
                }
            }
            mean_pre_sum /= std::max(probed, 1);
            const double theta_out =
                    static_cast<double>(net.scales().theta_int[spec.num_layers() - 1]);
            const double amp = std::clamp(
                    mean_pre_sum > 0.0 ? 3.0 * theta_out / mean_pre_sum : 1.0, 1.0,
                    static_cast<double>(config.engine_params().quant.init_frac));
            for (const std::int32_t c : new_classes) {
                for (std::int32_t i = 0; i < out_conn.rows; ++i) {
                    const std::uint64_t counter = (std::uint64_t{0xABCD} << 44)
                            + (static_cast<std::uint64_t>(inc) << 30)
                            + static_cast<std::uint64_t>(i) * out_conn.cols + c;
                    const double u = rng::u01(config.seed, rng::Stream::forward_weights,
                            counter);
                    out_conn.at(i, c) = quantize_weight(u * amp);
                }
            }
        }


        // Old-class pool for rehearsal, balanced across the old classes.
        std::vector<std::vector<std::size_t>> old_pools;
        for (const std::int32_t c : observed) {
            old_pools.push_back(class_indices(train, c));
        }

        for (std::int32_t round = 0; round < config.chunks_per_class; ++round) {
            std::vector<std::size_t> chunk;
            for (const auto &per_class : new_chunks) {
                chunk.insert(chunk.end(), per_class[round].begin(), per_class[round].end());
            }

            // Step 1: learn the new classes with the old outputs disabled
            // and a reduced learning rate. Classes not yet observed stay
            // frozen throughout so they enter later increments untouched.
            std::vector<std::uint8_t> mask(static_cast<std::size_t>(classes), 0);
            for (const std::int32_t c : new_classes) {
                mask[c] = 1;
            }
            net.set_output_mask(mask);
            net.set_learning_params(step1_learn);
            train_on(chunk, {});
            net.set_learning_params(base_learn);
            {
                std::vector<std::uint8_t> step2_mask(static_cast<std::size_t>(classes), 0);
                for (const std::int32_t c : observed_new) {
                    step2_mask[c] = 1;
                }
                net.set_output_mask(std::move(step2_mask));
            }

            {
                const EvalResult ev = eval_observed(observed_new);
                IncrementalRound r;
                r.increment = static_cast<std::int32_t>(inc);
                r.round = round;
                r.step = 1;
                r.observed = observed_new;
                r.accuracy = ev.accuracy;
                r.per_class_accuracy = ev.per_class_accuracy;
                writer.row(r);
                result.rounds.push_back(std::move(r));
            }

            // Step 2: retrain on the new chunk plus an equal-size rehearsal
            // sample drawn evenly from the old classes.
            std::vector<std::size_t> mixed = chunk;
            std::vector<std::size_t> noisy(mixed.size(), 0);
            const auto rehearsal =
                    draw_rehearsal(old_pools, chunk.size(), config.seed, rehearse_counter);
            for (const std::size_t idx : rehearsal) {
                mixed.push_back(idx);
                noisy.push_back(1);
            }
            train_on(mixed, noisy);

            {
                const EvalResult ev = eval_observed(observed_new);
                IncrementalRound r;
                r.increment = static_cast<std::int32_t>(inc);
                r.round = round;
                r.step = 2;
                r.observed = observed_new;
                r.accuracy = ev.accuracy;
                r.per_class_accuracy = ev.per_class_accuracy;
                writer.row(r);
                result.rounds.push_back(std::move(r));
            }
        }
        observed = observed_new;
    }

    result.final_accuracy = result.rounds.empty() ? result.pretrain_accuracy
                                                  : result.rounds.back().accuracy;
    if (!config.checkpoint_out.empty()) {
        save_checkpoint(config.checkpoint_out, net);
    }
    return result;
}

std::vector<std::size_t> draw_rehearsal(const std::vector<std::vector<std::size_t>> &old_pools,
        std::size_t total, std::uint64_t seed, std::uint64_t &counter)
{
    std::vector<std::size_t> out;
    out.reserve(total);
    const std::size_t n_old = old_pools.size();
    for (std::size_t k = 0; k < total; ++k) {
        const auto &pool = old_pools[k % n_old];
        if (pool.empty()) {
            throw DataError("old class has no samples to rehearse from");
        }
        const std::size_t pick = static_cast<std::size_t>(rng::uniform_int(seed,
                rng::Stream::misc, 0x5EED0000ULL + counter++, 0,
                static_cast<std::int64_t>(pool.size()) - 1));
        out.push_back(pool[pick]);
    }
    return out;
}

MapResult run_map(const RunConfig &config)
{
    const NetworkSpec spec = config.network_spec();
    Network net = Network::build(spec, config.seed, config.engine_params());
    MapResult r;
    try {
        const NetworkGraph graph = make_graph(net);
        const CoreMap map = map_network(graph, config.core_constraints(),
                config.l_m_policy(spec.num_layers()));
        r.cores_used = map.cores_used();
        std::filesystem::create_directories(config.out_dir);
        r.csv_path = join_path(config.out_dir, "coremap.csv");
        std::ofstream out(r.csv_path);
        out << coremap_csv(graph, map);
    } catch (const ConfigError &) {
        throw;
    } catch (const std::exception &e) {
        throw MapError(e.what());
    }
    return r;
}

MapResult run_sweep(const RunConfig &config)
{
    const NetworkSpec spec = config.network_spec();
    Network net = Network::build(spec, config.seed, config.engine_params());
    MapResult r;
    try {
        const NetworkGraph graph = make_graph(net);
        const auto rows = sweep_neurons_per_core(graph, config.core_constraints(),
                parse_int_list(config.sweep_list), spec.phase_len,
                to_string(spec.feedback_mode));
        for (const CostProxy &row : rows) {
            if (row.feasible) {
                r.cores_used = std::max(r.cores_used, row.cores_used);
            }
        }
        std::filesystem::create_directories(config.out_dir);
        r.csv_path = join_path(config.out_dir, "sweep.csv");
        std::ofstream out(r.csv_path);
        out << sweep_csv(rows);
    } catch (const ConfigError &) {
        throw;
    } catch (const std::exception &e) {
        throw MapError(e.what());
    }
    return r;
}

} // namespace emstdp
