#include "emstdp/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace emstdp {

namespace {

void write_i32le(std::ostream &out, std::int32_t v)
{
    const std::uint32_t u = static_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
            static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

std::int32_t read_i32le(std::istream &in, const std::string &path)
{
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    if (!in) {
        throw std::runtime_error(path + ": truncated checkpoint payload");
    }
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8)
            | (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return static_cast<std::int32_t>(u);
}

void write_f32le(std::ostream &out, float v)
{
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
            static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

float read_f32le(std::istream &in, const std::string &path)
{
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    if (!in) {
        throw std::runtime_error(path + ": truncated checkpoint payload");
    }
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8)
            | (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

std::string fmt_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Header {
    std::string payload;
    std::string structure;
    std::string feedback;
    std::int64_t theta = 0;
    std::int32_t phase_len = 0;
    std::uint64_t seed = 0;
    // conn <index> <rows> <cols> <theta_int> <scale>
    struct Conn {
        std::int64_t rows = 0;
        std::int64_t cols = 0;
        std::int64_t theta_int = 0;
        double scale = 0.0;
    };
    std::vector<Conn> conns;
    std::vector<Conn> fb; // feedback matrices, same fields (theta_int reused for theta_err)
};

void write_header(std::ostream &out, const Header &h)
{
    out << "EMSTDPCKPT 1\n";
    out << "payload " << h.payload << "\n";
    out << "structure " << h.structure << "\n";
    out << "feedback " << h.feedback << "\n";
    out << "theta " << h.theta << "\n";
    out << "phase_len " << h.phase_len << "\n";
    out << "seed " << h.seed << "\n";
    for (std::size_t i = 0; i < h.conns.size(); ++i) {
        const auto &c = h.conns[i];
        out << "conn " << i << " " << c.rows << " " << c.cols << " " << c.theta_int << " "
            << fmt_double(c.scale) << "\n";
    }
    for (std::size_t i = 0; i < h.fb.size(); ++i) {
        const auto &c = h.fb[i];
        out << "fb " << i << " " << c.rows << " " << c.cols << " " << c.theta_int << " "
            << fmt_double(c.scale) << "\n";
    }
    out << "end\n";
}

Header read_header(std::istream &in, const std::string &path)
{
    std::string line;
    if (!std::getline(in, line) || line != "EMSTDPCKPT 1") {
        throw std::runtime_error(path + ": not an EMSTDPCKPT v1 file");
    }
    Header h;
    while (std::getline(in, line)) {
        if (line == "end") {
            return h;
        }
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "payload") {
            ss >> h.payload;
        } else if (key == "structure") {
            ss >> h.structure;
        } else if (key == "feedback") {
            ss >> h.feedback;
        } else if (key == "theta") {
            ss >> h.theta;
        } else if (key == "phase_len") {
            ss >> h.phase_len;
        } else if (key == "seed") {
            ss >> h.seed;
        } else if (key == "conn" || key == "fb") {
            std::size_t idx = 0;
            Header::Conn c;
            ss >> idx >> c.rows >> c.cols >> c.theta_int >> c.scale;
            auto &vec = (key == "conn") ? h.conns : h.fb;
            if (idx != vec.size()) {
                throw std::runtime_error(path + ": out-of-order connection entry");
            }
            vec.push_back(c);
        }
        if (!ss) {
            throw std::runtime_error(path + ": malformed header line: " + line);
        }
    }
    throw std::runtime_error(path + ": header missing 'end' terminator");
}

} // namespace

std::string checkpoint_payload_kind(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    return read_header(in, path).payload;
}

void save_checkpoint(const std::string &path, const Network &net)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint: " + path);
    }
    const NetworkSpec &spec = net.spec();
    Header h;
    h.payload = "int8";
    h.structure = spec.structure;
    h.feedback = to_string(spec.feedback_mode);
    h.theta = spec.theta;
    h.phase_len = spec.phase_len;
    h.seed = net.seed();
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        Header::Conn c;
        const std::int64_t ti = net.scales().theta_int[l];
        c.theta_int = ti;
        c.scale = static_cast<double>(spec.theta) / static_cast<double>(ti);
        if (spec.layers[l].kind == LayerKind::dense) {
            c.rows = spec.layers[l - 1].size();
            c.cols = spec.layers[l].size();
        } else {
            c.rows = static_cast<std::int64_t>(spec.layers[l].channels)
                    * spec.layers[l - 1].channels;
            c.cols = static_cast<std::int64_t>(spec.layers[l].kernel) * spec.layers[l].kernel;
        }
        h.conns.push_back(c);
    }
    for (const DenseConn &b : net.fa_b()) {
        h.fb.push_back(Header::Conn{b.rows, b.cols, net.scales().theta_err, 1.0});
    }
    for (const DenseConn &b : net.dfa_b()) {
        h.fb.push_back(Header::Conn{b.rows, b.cols, 0, 1.0});
    }
    write_header(out, h);

    std::size_t di = 0;
    std::size_t ci = 0;
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        if (spec.layers[l].kind == LayerKind::dense) {
            for (const std::int32_t w : net.dense_conns()[di].w) {
                write_i32le(out, w);
            }
            ++di;
        } else {
            for (const std::int32_t w : net.conv_conns()[ci].kernel) {
                write_i32le(out, w);
            }
            ++ci;
        }
    }
    for (const DenseConn &b : net.fa_b()) {
        for (const std::int32_t w : b.w) {
            write_i32le(out, w);
        }
    }
    for (const DenseConn &b : net.dfa_b()) {
        for (const std::int32_t w : b.w) {
            write_i32le(out, w);
        }
    }
}

void load_checkpoint(const std::string &path, Network &net)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    const Header h = read_header(in, path);
    if (h.payload != "int8") {
        throw std::runtime_error(path + ": expected an int8 engine checkpoint, got payload "
                + h.payload);
    }
    const NetworkSpec &spec = net.spec();
    if (h.structure != spec.structure) {
        throw std::runtime_error(path + ": checkpoint structure " + h.structure
                + " does not match network structure " + spec.structure);
    }
    if (h.feedback != to_string(spec.feedback_mode)) {
        throw std::runtime_error(path + ": feedback mode mismatch");
    }
    if (h.conns.size() != spec.num_layers() - 1) {
        throw std::runtime_error(path + ": connection count mismatch");
    }

    std::size_t di = 0;
    std::size_t ci = 0;
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        const Header::Conn &hc = h.conns[l - 1];
        if (spec.layers[l].kind == LayerKind::dense) {
            DenseConn &c = net.mutable_dense_conns()[di];
            if (hc.rows != c.rows || hc.cols != c.cols) {
                throw std::runtime_error(path + ": dense connection shape mismatch");
            }
            for (std::int32_t &w : c.w) {
                w = read_i32le(in, path);
            }
            ++di;
        } else {
            // kernel entries, then threshold override
            std::vector<std::int32_t> kernel(
                    static_cast<std::size_t>(hc.rows) * static_cast<std::size_t>(hc.cols));
            if (kernel.size() != net.conv_conns()[ci].kernel.size()) {
                throw std::runtime_error(path + ": conv kernel shape mismatch");
            }
            for (std::int32_t &w : kernel) {
                w = read_i32le(in, path);
            }
            net.set_conv_kernel(ci, std::move(kernel), hc.theta_int);
            ++ci;
        }
    }
    auto load_fb = [&](std::vector<DenseConn> &mats, std::size_t base) {
        for (std::size_t i = 0; i < mats.size(); ++i) {
            const Header::Conn &hc = h.fb[base + i];
            if (hc.rows != mats[i].rows || hc.cols != mats[i].cols) {
                throw std::runtime_error(path + ": feedback matrix shape mismatch");
            }
            for (std::int32_t &w : mats[i].w) {
                w = read_i32le(in, path);
            }
        }
    };
    if (h.fb.size() != net.fa_b().size() + net.dfa_b().size()) {
        throw std::runtime_error(path + ": feedback matrix count mismatch");
    }
    load_fb(net.mutable_fa_b(), 0);
    load_fb(net.mutable_dfa_b(), net.fa_b().size());
}

void save_fp_checkpoint(const std::string &path, const FpNetwork &net)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint: " + path);
    }
    const NetworkSpec &spec = net.spec;
    Header h;
    h.payload = "f32";
    h.structure = spec.structure;
    h.feedback = to_string(spec.feedback_mode);
    h.theta = spec.theta;
    h.phase_len = spec.phase_len;
    h.seed = 0;
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        Header::Conn c;
        const std::int64_t ti = net.scales.theta_int[l];
        c.theta_int = ti;
        c.scale = static_cast<double>(spec.theta) / static_cast<double>(ti);
        if (spec.layers[l].kind == LayerKind::dense) {
            c.rows = spec.layers[l - 1].size();
            c.cols = spec.layers[l].size();
        } else {
            c.rows = static_cast<std::int64_t>(spec.layers[l].channels)
                    * spec.layers[l - 1].channels;
            c.cols = static_cast<std::int64_t>(spec.layers[l].kernel) * spec.layers[l].kernel;
        }
        h.conns.push_back(c);
    }
    for (const Mat &b : net.fa_chain) {
        h.fb.push_back(Header::Conn{b.rows, b.cols, net.scales.theta_err, 1.0});
    }
    for (const Mat &b : net.dfa_direct) {
        h.fb.push_back(Header::Conn{b.rows, b.cols, 0, 1.0});
    }
    write_header(out, h);
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        if (spec.layers[l].kind == LayerKind::dense) {
            for (const double w : net.weights[l - 1].a) {
                write_f32le(out, static_cast<float>(w));
            }
        } else {
            for (const double w : net.kernels[l - 1]) {
                write_f32le(out, static_cast<float>(w));
            }
        }
    }
    for (const Mat &b : net.fa_chain) {
        for (const double w : b.a) {
            write_f32le(out, static_cast<float>(w));
        }
    }
    for (const Mat &b : net.dfa_direct) {
        for (const double w : b.a) {
            write_f32le(out, static_cast<float>(w));
        }
    }
}

namespace {

void load_payload_into_fp(std::istream &in, const std::string &path, const Header &h,
        FpNetwork &net, bool int_payload)
{
    const NetworkSpec &spec = net.spec;
    if (h.structure != spec.structure) {
        throw std::runtime_error(path + ": checkpoint structure " + h.structure
                + " does not match network structure " + spec.structure);
    }
    if (h.conns.size() != spec.num_layers() - 1) {
        throw std::runtime_error(path + ": connection count mismatch");
    }
    auto next = [&]() {
        return int_payload ? static_cast<double>(read_i32le(in, path))
                           : static_cast<double>(read_f32le(in, path));
    };
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        const Header::Conn &hc = h.conns[l - 1];
        net.scales.theta_int[l] = hc.theta_int;
        if (spec.layers[l].kind == LayerKind::dense) {
            Mat &w = net.weights[l - 1];
            if (hc.rows != w.rows || hc.cols != w.cols) {
                throw std::runtime_error(path + ": dense connection shape mismatch");
            }
            for (double &x : w.a) {
                x = next();
            }
        } else {
            std::vector<double> &kw = net.kernels[l - 1];
            if (static_cast<std::size_t>(hc.rows) * hc.cols != kw.size()) {
                throw std::runtime_error(path + ": conv kernel shape mismatch");
            }
            for (double &x : kw) {
                x = next();
            }
        }
    }
    // f32 oracle checkpoints carry both feedback variants; int8 engine
    // checkpoints carry only the matrices of their own mode.
    const bool both = h.fb.size() == net.fa_chain.size() + net.dfa_direct.size();
    const bool fa_only = !both && h.feedback == "FA" && h.fb.size() == net.fa_chain.size();
    const bool dfa_only = !both && h.feedback == "DFA" && h.fb.size() == net.dfa_direct.size();
    if (!both && !fa_only && !dfa_only) {
        throw std::runtime_error(path + ": feedback matrix count mismatch");
    }
    std::size_t base = 0;
    if (both || fa_only) {
        for (Mat &b : net.fa_chain) {
            if (h.fb[base].rows != b.rows || h.fb[base].cols != b.cols) {
                throw std::runtime_error(path + ": feedback matrix shape mismatch");
            }
            for (double &x : b.a) {
                x = next();
            }
            ++base;
        }
    }
    if (both || dfa_only) {
        for (Mat &b : net.dfa_direct) {
            if (h.fb[base].rows != b.rows || h.fb[base].cols != b.cols) {
                throw std::runtime_error(path + ": feedback matrix shape mismatch");
            }
            for (double &x : b.a) {
                x = next();
            }
            ++base;
        }
    }
}

} // namespace

void load_fp_checkpoint(const std::string &path, FpNetwork &net)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    const Header h = read_header(in, path);
    if (h.payload != "f32") {
        throw std::runtime_error(path + ": expected an f32 oracle checkpoint");
    }
    load_payload_into_fp(in, path, h, net, false);
}

void load_checkpoint_into_fp(const std::string &path, FpNetwork &net)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    const Header h = read_header(in, path);
    if (h.payload != "int8") {
        throw std::runtime_error(path + ": expected an int8 engine checkpoint");
    }
    load_payload_into_fp(in, path, h, net, true);
}

void save_conv_checkpoint(const std::string &path, const NetworkSpec &spec,
        const std::vector<std::vector<double>> &kernels, const std::vector<double> &scales)
{
    std::size_t n_conv = 0;
    for (const LayerDesc &d : spec.layers) {
        if (d.kind == LayerKind::conv) {
            ++n_conv;
        }
    }
    if (kernels.size() != n_conv || scales.size() != n_conv) {
        throw std::invalid_argument("save_conv_checkpoint: one kernel and scale per conv layer");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint: " + path);
    }
    Header h;
    h.payload = "conv-f32";
    h.structure = spec.structure;
    h.feedback = to_string(spec.feedback_mode);
    h.theta = spec.theta;
    h.phase_len = spec.phase_len;
    h.seed = 0;
    std::size_t ci = 0;
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        if (spec.layers[l].kind != LayerKind::conv) {
            continue;
        }
        Header::Conn c;
        c.rows = static_cast<std::int64_t>(spec.layers[l].channels) * spec.layers[l - 1].channels;
        c.cols = static_cast<std::int64_t>(spec.layers[l].kernel) * spec.layers[l].kernel;
        c.scale = scales[ci];
        c.theta_int = std::llround(static_cast<double>(spec.theta) / scales[ci]);
        if (kernels[ci].size() != static_cast<std::size_t>(c.rows) * c.cols) {
            throw std::invalid_argument("save_conv_checkpoint: kernel size mismatch");
        }
        h.conns.push_back(c);
        ++ci;
    }
    write_header(out, h);
    for (const auto &kw : kernels) {
        for (const double w : kw) {
            write_f32le(out, static_cast<float>(w));
        }
    }
}

void load_conv_checkpoint(const std::string &path, Network &net)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path);
    }
    const Header h = read_header(in, path);
    if (h.payload != "conv-f32") {
        throw std::runtime_error(path + ": expected a conv-f32 checkpoint");
    }
    const NetworkSpec &spec = net.spec();
    std::size_t ci = 0;
    for (std::size_t l = 1; l < spec.num_layers(); ++l) {
        if (spec.layers[l].kind != LayerKind::conv) {
            continue;
        }
        if (ci >= h.conns.size()) {
            throw std::runtime_error(path + ": too few conv entries for this network");
        }
        const Header::Conn &hc = h.conns[ci];
        const std::size_t kn = static_cast<std::size_t>(hc.rows) * hc.cols;
        if (kn != net.conv_conns()[ci].kernel.size()) {
            throw std::runtime_error(path + ": conv kernel shape mismatch at layer "
                    + std::to_string(l));
        }
        std::vector<std::int32_t> kernel(kn);
        for (std::size_t i = 0; i < kn; ++i) {
            const double w = read_f32le(in, path);
            kernel[i] = quantize_weight(w / hc.scale);
        }
        net.set_conv_kernel(ci, std::move(kernel), hc.theta_int);
        ++ci;
    }
    if (ci != h.conns.size()) {
        throw std::runtime_error(path + ": conv layer count mismatch");
    }
}

} // namespace emstdp
