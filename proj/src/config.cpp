#include "gsgan/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gsgan {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
    auto def = [&](const char* k, const char* v, const char* d) {
        entries_.push_back({k, v, d});
    };
    def("preset", "cifar", "hyperparameter preset: cifar | ttur | none");
    def("dataset", "blobs", "training data: cifar10 | blobs | rings | stripes");
    def("data_dir", "", "CIFAR-10 binary file or directory with data_batch_*.bin");
    def("resolution", "32", "image resolution: 8, 16, 32 or 128");
    def("num_classes", "1", "class count for synthetic data and conditional models");
    def("synth_n", "2048", "synthetic dataset size");
    def("conditional", "0", "class-conditional GAN (cBN cond vector + projection D)");
    def("shortcut", "gated", "identity | gated | egs | sog | egsconv | sogconv");
    def("z_dim", "128", "latent vector width");
    def("g_channels", "256", "generator base channel width");
    def("d_channels", "128", "discriminator base channel width");
    def("embed_dim", "128", "class embedding width in the generator");
    def("init", "glorot", "weight init: glorot | normal002");
    def("loss", "hinge", "adversarial loss: hinge | standard");
    def("lr_g", "0.0002", "generator learning rate");
    def("lr_d", "0.0002", "discriminator learning rate");
    def("beta1", "0", "Adam beta1");
    def("beta2", "0.9", "Adam beta2");
    def("adam_eps", "1e-8", "Adam epsilon");
    def("n_dis", "5", "discriminator updates per generator update");
    def("batch_d", "64", "discriminator batch size");
    def("batch_g", "128", "generator batch size");
    def("total_iters", "50000", "total generator iterations");
    def("decay_last", "50000", "linear LR decay over the last N iterations");
    def("sn_g", "0", "spectral normalization in the generator");
    def("sn_d", "1", "spectral normalization in the discriminator");
    def("seed", "1", "master seed");
    def("eval_every", "0", "FID/IS evaluation period in iterations (0 = off)");
    def("eval_samples", "512", "samples per FID/IS evaluation");
    def("extractor", "randconv", "feature extractor: randconv | pixelmoments");
    def("extractor_seed", "7", "seed of the fixed random extractor");
    def("ckpt_every", "0", "checkpoint period in iterations (0 = off)");
    def("sample_every", "0", "sample-grid period in iterations (0 = off)");
    def("sample_count", "16", "images per sample grid");
    def("sample_grid", "4", "grid columns for sample sheets");
    def("bn_eval_sampling", "1", "use eval-mode BN statistics when sampling");
    def("conditional_shortcut_bn", "0", "condition the shortcut-path BN as well");
}

RunConfig::Entry* RunConfig::find(const std::string& key) {
    for (auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

const RunConfig::Entry* RunConfig::find(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

void RunConfig::apply_preset(const std::string& name) {
    auto raw = [&](const char* k, const char* v) { find(k)->value = v; };
    if (name == "cifar") {
        raw("lr_g", "0.0002");
        raw("lr_d", "0.0002");
        raw("n_dis", "5");
        raw("batch_d", "64");
        raw("batch_g", "128");
        raw("sn_g", "0");
        raw("sn_d", "1");
    } else if (name == "ttur") {
        raw("lr_g", "0.0001");
        raw("lr_d", "0.0004");
        raw("n_dis", "1");
        raw("batch_d", "32");
        raw("batch_g", "32");
        raw("sn_g", "1");
        raw("sn_d", "1");
    } else if (name != "none") {
        throw ValueError("config: unknown preset '" + name + "' (cifar|ttur|none)");
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    Entry* e = find(key);
    if (!e) throw ValueError("config: unknown key '" + key + "'");
    if (key == "preset") apply_preset(value);
    e->value = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw ValueError("config: unknown key '" + key + "'");
    return e->value;
}

bool RunConfig::has(const std::string& key) const { return find(key) != nullptr; }

std::int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ValueError("config: key '" + key + "' = '" + v + "' is not an integer");
    return x;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) throw ValueError("config: key '" + key + "' must be non-negative");
    return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ValueError("config: key '" + key + "' = '" + v + "' is not a number");
    return x;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ValueError("config: key '" + key + "' = '" + v + "' is not a boolean");
}

void RunConfig::parse_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValueError("config: line " + std::to_string(lineno) + " is not 'key = value': " +
                             line);
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    parse_text(ss.str());
}

std::string RunConfig::emit() const {
    std::ostringstream os;
    for (const auto& e : entries_) {
        os << "# " << e.doc << "\n";
        os << e.key << " = " << e.value << "\n";
    }
    return os.str();
}

std::string RunConfig::emit_defaults() { return RunConfig().emit(); }

}  // namespace gsgan
