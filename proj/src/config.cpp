#include "hclr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hclr/errors.hpp"
#include "hclr/idx.hpp"

namespace hclr {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    T v{};
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        throw ConfigError("bad value for '" + key + "': '" + raw + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("bad value for '" + key + "': '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
    std::vector<std::string> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
    std::vector<T> out;
    for (const auto& s : split_list(raw)) out.push_back(parse_number<T>(key, s));
    return out;
}

template <class E>
E parse_enum(const std::string& key, const std::string& raw, const std::map<std::string, E>& names) {
    auto it = names.find(trim(raw));
    if (it == names.end()) throw ConfigError("bad value for '" + key + "': '" + raw + "'");
    return it->second;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <class T, class Field>
Setter number(Field f) {
    return [f](ExperimentConfig& c, const std::string& k, const std::string& v) { f(c) = parse_number<T>(k, v); };
}

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    using C = ExperimentConfig;
    static const std::map<std::string, std::map<std::string, Setter>> s{
        {"dataset",
         {
             {"kind",
              [](C& c, const std::string& k, const std::string& v) {
                  c.dataset.kind = trim(v);
                  if (c.dataset.kind != "blobs" && c.dataset.kind != "composite_digits") {
                      throw ConfigError("bad value for '" + k + "': '" + v + "'");
                  }
              }},
             {"seed", [](C& c, const std::string& k, const std::string& v) {
                  c.dataset.blobs.seed = parse_number<std::uint64_t>(k, v);
                  c.dataset.composite.image.seed = c.dataset.blobs.seed;
              }},
             {"coarse_count", number<int>([](C& c) -> int& { return c.dataset.blobs.coarse_count; })},
             {"fine_per_coarse", number<int>([](C& c) -> int& { return c.dataset.blobs.fine_per_coarse; })},
             {"input_dim", number<int>([](C& c) -> int& { return c.dataset.blobs.input_dim; })},
             {"coarse_separation", number<double>([](C& c) -> double& { return c.dataset.blobs.coarse_separation; })},
             {"fine_separation", number<double>([](C& c) -> double& { return c.dataset.blobs.fine_separation; })},
             {"noise_sigma", number<double>([](C& c) -> double& { return c.dataset.blobs.noise_sigma; })},
             {"samples_per_fine", number<int>([](C& c) -> int& { return c.dataset.blobs.samples_per_fine; })},
             {"canvas_size", number<int>([](C& c) -> int& { return c.dataset.composite.image.canvas_size; })},
             {"glyph_size", number<int>([](C& c) -> int& { return c.dataset.composite.image.glyph_size; })},
             {"subsidiary_count", number<int>([](C& c) -> int& { return c.dataset.composite.image.subsidiary_count; })},
             {"category_count", number<int>([](C& c) -> int& { return c.dataset.composite.category_count; })},
             {"samples_per_class", number<int>([](C& c) -> int& { return c.dataset.composite.samples_per_class; })},
             {"glyph_seed", number<std::uint64_t>([](C& c) -> std::uint64_t& { return c.dataset.glyph_seed; })},
             {"idx_images", [](C& c, const std::string&, const std::string& v) { c.dataset.idx_images = trim(v); }},
             {"idx_labels", [](C& c, const std::string&, const std::string& v) { c.dataset.idx_labels = trim(v); }},
         }},
        {"encoder",
         {
             {"hidden_dims",
              [](C& c, const std::string& k, const std::string& v) {
                  c.encoder.hidden_dims = parse_list<std::size_t>(k, v);
              }},
             {"embed_dim", number<std::size_t>([](C& c) -> std::size_t& { return c.encoder.embed_dim; })},
             {"activation",
              [](C& c, const std::string& k, const std::string& v) {
                  c.encoder.activation =
                      parse_enum<Activation>(k, v, {{"relu", Activation::relu}, {"tanh", Activation::tanh}});
              }},
         }},
        {"training",
         {
             {"losses",
              [](C& c, const std::string& k, const std::string& v) {
                  c.losses.clear();
                  for (const auto& name : split_list(v)) {
                      try {
                          c.losses.push_back(parse_loss_kind(name));
                      } catch (const ConfigError&) {
                          throw ConfigError("bad value for '" + k + "': unknown loss '" + name + "'");
                      }
                  }
              }},
             {"epochs", number<int>([](C& c) -> int& { return c.training.epochs; })},
             {"batch_size", number<std::size_t>([](C& c) -> std::size_t& { return c.training.batch_size; })},
             {"learning_rate", number<double>([](C& c) -> double& { return c.training.optimizer.learning_rate; })},
             {"momentum", number<double>([](C& c) -> double& { return c.training.optimizer.momentum; })},
             {"optimizer",
              [](C& c, const std::string& k, const std::string& v) {
                  c.training.optimizer.kind = parse_enum<OptimizerKind>(
                      k, v, {{"adam", OptimizerKind::adam}, {"sgd_momentum", OptimizerKind::sgd_momentum}});
              }},
             {"tau", number<double>([](C& c) -> double& { return c.training.loss.tau; })},
             {"lambda_mode",
              [](C& c, const std::string& k, const std::string& v) {
                  c.training.loss.lambda_mode = parse_enum<LambdaMode>(
                      k, v, {{"linear", LambdaMode::linear}, {"exponential", LambdaMode::exponential}});
              }},
             {"hierarchy_order",
              [](C& c, const std::string& k, const std::string& v) {
                  c.training.loss.hierarchy_order = parse_enum<HierarchyOrder>(
                      k, v,
                      {{"category_first", HierarchyOrder::category_first},
                       {"class_first", HierarchyOrder::class_first}});
              }},
             {"supcon_level", number<std::size_t>([](C& c) -> std::size_t& { return c.training.supcon_level; })},
             {"gmm_refit_interval", number<int>([](C& c) -> int& { return c.training.gmm_refit_interval; })},
             {"em_max_iters", number<int>([](C& c) -> int& { return c.training.em_max_iters; })},
             {"em_tol", number<double>([](C& c) -> double& { return c.training.em_tol; })},
             {"head_init",
              [](C& c, const std::string& k, const std::string& v) {
                  c.training.head_init = parse_enum<HeadInit>(
                      k, v, {{"zeros", HeadInit::zeros}, {"scaled_gaussian", HeadInit::scaled_gaussian}});
              }},
             {"augment_strength", number<double>([](C& c) -> double& { return c.training.augment_strength; })},
             {"vector_noise", number<double>([](C& c) -> double& { return c.training.augment.vector_noise; })},
             {"dropout", number<double>([](C& c) -> double& { return c.training.augment.dropout; })},
             {"pixel_noise", number<double>([](C& c) -> double& { return c.training.augment.pixel_noise; })},
         }},
        {"evaluation",
         {
             {"probe_levels",
              [](C& c, const std::string& k, const std::string& v) {
                  c.evaluation.probe_levels = parse_list<std::size_t>(k, v);
              }},
             {"export_embeddings",
              [](C& c, const std::string& k, const std::string& v) { c.evaluation.export_embeddings = parse_bool(k, v); }},
             {"export_projection",
              [](C& c, const std::string& k, const std::string& v) { c.evaluation.export_projection = parse_bool(k, v); }},
         }},
        {"experiment",
         {
             {"seeds", [](C& c, const std::string& k, const std::string& v) { c.seeds = parse_list<std::uint64_t>(k, v); }},
         }},
    };
    return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax error: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    ExperimentConfig cfg;
    cfg.text = text;
    bool have_kind = false, have_losses = false;
    const auto& known = schema();
    for (const auto& [section, body] : tree) {
        auto sec = known.find(section);
        if (sec == known.end()) {
            throw ConfigError(body.empty() ? "key '" + section + "' must sit inside a section"
                                           : "unknown section '" + section + "'");
        }
        for (const auto& [key, node] : body) {
            const std::string full = section + "." + key;
            auto setter = sec->second.find(key);
            if (setter == sec->second.end()) throw ConfigError("unknown key '" + full + "'");
            setter->second(cfg, full, node.data());
            have_kind = have_kind || full == "dataset.kind";
            have_losses = have_losses || full == "training.losses";
        }
    }
    if (!have_kind) throw ConfigError("missing key 'dataset.kind'");
    if (!have_losses || cfg.losses.empty()) throw ConfigError("missing key 'training.losses'");
    if (cfg.seeds.empty()) throw ConfigError("bad value for 'experiment.seeds': need at least one seed");
    if (cfg.dataset.kind == "composite_digits" &&
        cfg.dataset.idx_images.empty() != cfg.dataset.idx_labels.empty()) {
        throw ConfigError("'dataset.idx_images' and 'dataset.idx_labels' must be given together");
    }
    for (const auto* path : {&cfg.dataset.idx_images, &cfg.dataset.idx_labels}) {
        if (!path->empty() && !std::filesystem::exists(*path)) {
            throw ConfigError("dataset file not found: " + *path);
        }
    }
    for (auto h : cfg.evaluation.probe_levels) {
        if (h < 1 || h > 2) throw ConfigError("bad value for 'evaluation.probe_levels': levels are 1 or 2");
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind == "blobs") return generate_blobs(cfg.dataset.blobs);
    const std::size_t glyph = static_cast<std::size_t>(std::max(cfg.dataset.composite.image.glyph_size, 1));
    if (!cfg.dataset.idx_images.empty()) {
        ImageGlyphs glyphs(load_idx_images(cfg.dataset.idx_images), load_idx_labels(cfg.dataset.idx_labels), glyph);
        return generate_composite_digits(cfg.dataset.composite, glyphs);
    }
    ProceduralGlyphs glyphs(cfg.dataset.glyph_seed, glyph);
    return generate_composite_digits(cfg.dataset.composite, glyphs);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hclr
