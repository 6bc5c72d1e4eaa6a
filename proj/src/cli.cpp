#include "hclr/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "hclr/config.hpp"
#include "hclr/errors.hpp"

namespace hclr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
    std::string config;
    std::string out;
    std::string seeds;
    std::string losses;
};

// Shortest round-trip decimal form.
std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::vector<std::uint64_t> parse_seeds(const std::string& raw) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::uint64_t v = 0;
        auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || end != item.data() + item.size()) {
            throw ConfigError("bad value for '--seeds': '" + raw + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("bad value for '--seeds': need at least one seed");
    return out;
}

std::size_t thread_cap(std::size_t jobs) {
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("HCLR_THREADS")) {
        std::string s(env);
        std::size_t v = 0;
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || end != s.data() + s.size() || v == 0) {
            throw ConfigError("bad value for 'HCLR_THREADS': '" + s + "'");
        }
        cap = v;
    }
    return std::min(cap, jobs);
}

struct Job {
    std::uint64_t seed;
    LossKind loss;
    HierarchyOrder order;
};

// Runs every job; results keep job order whatever the thread count.
std::vector<RunReport> run_jobs(const Dataset& data, const ExperimentConfig& cfg, const std::vector<Job>& jobs) {
    std::vector<RunReport> reports(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next++) < jobs.size();) {
            try {
                EncoderSpec enc = cfg.encoder;
                enc.input_dim = data.feature_size();
                enc.seed = jobs[k].seed;
                TrainConfig tc = cfg.training;
                tc.loss_kind = jobs[k].loss;
                tc.loss.hierarchy_order = jobs[k].order;
                tc.seed = jobs[k].seed;
                reports[k] = run_experiment(data, enc, tc);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t n = thread_cap(jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return reports;
}

json report_json(const RunReport& r) {
    json levels = json::array();
    for (const auto& l : r.levels) {
        levels.push_back({{"level", l.level}, {"probe_accuracy", l.probe_accuracy}, {"silhouette", l.silhouette}});
    }
    return {
        {"loss", r.loss},
        {"hierarchy_order", r.hierarchy_order},
        {"seed", r.seed},
        {"epoch_losses", r.epoch_losses},
        {"levels", levels},
        {"variance_explained", r.variance_explained},
        {"diagnostics",
         {{"empty_mask_fallbacks", r.diagnostics.empty_mask_fallbacks},
          {"em_fits", r.diagnostics.em_fits},
          {"em_iterations", r.diagnostics.em_iterations},
          {"steps", r.diagnostics.steps}}},
    };
}

class Output {
   public:
    explicit Output(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    std::ofstream open(const std::string& name) {
        artifacts_.insert(name);
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
        return f;
    }

    void manifest(const std::string& command, const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                  const std::vector<LossKind>& losses) {
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(cfg.text)));
        std::vector<std::string> names;
        for (auto l : losses) names.push_back(to_string(l));
        json m{{"command", command},
               {"config_hash", std::string(hash)},
               {"seeds", seeds},
               {"losses", names},
               {"artifacts", std::vector<std::string>(artifacts_.begin(), artifacts_.end())}};
        std::ofstream f(dir_ / "manifest.json", std::ios::binary);
        f << m.dump(2) << "\n";
    }

   private:
    fs::path dir_;
    std::set<std::string> artifacts_;
};

std::vector<std::size_t> probe_levels(const ExperimentConfig& cfg, const Dataset& data) {
    if (!cfg.evaluation.probe_levels.empty()) return cfg.evaluation.probe_levels;
    std::vector<std::size_t> all;
    for (std::size_t h = 1; h <= data.depth; ++h) all.push_back(h);
    return all;
}

void write_embeddings(Output& out, const Dataset& data, const RunReport& r) {
    const std::string tag = r.loss + "_" + std::to_string(r.seed);
    auto f = out.open("embeddings_" + tag + ".csv");
    f << "id,level1,level2";
    for (std::size_t j = 0; j < r.embeddings.cols(); ++j) f << ",e" << j;
    f << "\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data.samples[i];
        f << s.id << "," << s.labels.at(1) << "," << s.labels.at(2);
        for (double v : r.embeddings.row(i)) f << "," << num(v);
        f << "\n";
    }
}

void write_projection(Output& out, const Dataset& data, const RunReport& r) {
    const std::string tag = r.loss + "_" + std::to_string(r.seed);
    auto f = out.open("projection_" + tag + ".csv");
    f << "id,level1,level2,x,y\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data.samples[i];
        f << s.id << "," << s.labels.at(1) << "," << s.labels.at(2) << "," << num(r.projection.at(i, 0)) << ","
          << num(r.projection.at(i, 1)) << "\n";
    }
}

void write_reports(Output& out, const std::vector<std::uint64_t>& seeds, const std::vector<RunReport>& reports) {
    for (auto seed : seeds) {
        json runs = json::array();
        for (const auto& r : reports) {
            if (r.seed == seed) runs.push_back(report_json(r));
        }
        auto f = out.open("report_" + std::to_string(seed) + ".json");
        f << json{{"seed", seed}, {"runs", runs}}.dump(2) << "\n";
    }
}

void write_metrics(Output& out, const std::vector<RunReport>& reports, const std::vector<std::size_t>& levels) {
    auto f = out.open("metrics.csv");
    f << "seed,loss,level,probe_acc,silhouette\n";
    for (const auto& r : reports) {
        for (auto h : levels) {
            const auto& l = r.levels.at(h - 1);
            f << r.seed << "," << r.loss << "," << h << "," << num(l.probe_accuracy) << "," << num(l.silhouette)
              << "\n";
        }
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Prepared {
    ExperimentConfig cfg;
    std::vector<std::uint64_t> seeds;
    Dataset data;
};

Prepared prepare(const Options& opt) {
    Prepared p{load_config(opt.config), {}, {}};
    p.seeds = opt.seeds.empty() ? p.cfg.seeds : parse_seeds(opt.seeds);
    if (std::set<std::uint64_t>(p.seeds.begin(), p.seeds.end()).size() != p.seeds.size()) {
        throw ConfigError("bad value for 'seeds': duplicate seed");
    }
    try {
        p.data = build_dataset(p.cfg);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid dataset section: ") + e.what());
    }
    if (p.data.depth != 2) throw ConfigError("datasets must have two hierarchy levels");
    return p;
}

std::vector<Job> grid(const std::vector<std::uint64_t>& seeds, const std::vector<LossKind>& losses,
                      HierarchyOrder order) {
    std::vector<Job> jobs;
    for (auto s : seeds)
        for (auto l : losses) jobs.push_back({s, l, order});
    return jobs;
}

int cmd_run(const Options& opt, bool exports_only, std::ostream& log) {
    auto p = prepare(opt);
    Output out(opt.out);
    auto reports = run_jobs(p.data, p.cfg, grid(p.seeds, p.cfg.losses, p.cfg.training.loss.hierarchy_order));
    if (!exports_only) {
        write_reports(out, p.seeds, reports);
        write_metrics(out, reports, probe_levels(p.cfg, p.data));
    }
    for (const auto& r : reports) {
        if (exports_only || p.cfg.evaluation.export_embeddings) write_embeddings(out, p.data, r);
        if (exports_only || p.cfg.evaluation.export_projection) write_projection(out, p.data, r);
    }
    out.manifest(exports_only ? "export-embeddings" : "run", p.cfg, p.seeds, p.cfg.losses);
    log << "wrote " << reports.size() << " runs to " << opt.out << "\n";
    return 0;
}

int cmd_compare(const Options& opt, std::ostream& log) {
    auto p = prepare(opt);
    std::vector<LossKind> losses = p.cfg.losses;
    if (!opt.losses.empty()) {
        losses.clear();
        std::stringstream ss(opt.losses);
        std::string name;
        while (std::getline(ss, name, ',')) {
            try {
                losses.push_back(parse_loss_kind(name));
            } catch (const ConfigError&) {
                throw ConfigError("bad value for '--losses': unknown loss '" + name + "'");
            }
        }
    }
    if (std::set<LossKind>(losses.begin(), losses.end()).size() < 2) {
        throw ConfigError("bad value for '--losses': compare needs at least two distinct losses");
    }
    Output out(opt.out);
    auto reports = run_jobs(p.data, p.cfg, grid(p.seeds, losses, p.cfg.training.loss.hierarchy_order));
    write_reports(out, p.seeds, reports);
    const auto levels = probe_levels(p.cfg, p.data);
    write_metrics(out, reports, levels);

    auto f = out.open("comparison.csv");
    f << "loss,level,median_probe_acc,median_silhouette,median_variance_explained,beats\n";
    auto medians = [&](LossKind l, std::size_t h) {
        std::vector<double> acc, sil, ve;
        for (const auto& r : reports) {
            if (r.loss != to_string(l)) continue;
            acc.push_back(r.levels.at(h - 1).probe_accuracy);
            sil.push_back(r.levels.at(h - 1).silhouette);
            ve.push_back(r.variance_explained);
        }
        return std::array<double, 3>{median(acc), median(sil), median(ve)};
    };
    for (auto l : losses) {
        for (auto h : levels) {
            const auto m = medians(l, h);
            std::string beats;
            for (auto other : losses) {
                if (other != l && m[0] > medians(other, h)[0]) beats += (beats.empty() ? "" : ";") + to_string(other);
            }
            f << to_string(l) << "," << h << "," << num(m[0]) << "," << num(m[1]) << "," << num(m[2]) << ","
              << beats << "\n";
        }
    }
    out.manifest("compare", p.cfg, p.seeds, losses);
    log << "compared " << losses.size() << " losses over " << p.seeds.size() << " seeds\n";
    return 0;
}

int cmd_ablate(const Options& opt, std::ostream& log) {
    auto p = prepare(opt);
    Output out(opt.out);
    std::vector<Job> jobs;
    for (auto s : p.seeds)
        for (auto l : p.cfg.losses)
            for (auto o : {HierarchyOrder::class_first, HierarchyOrder::category_first}) jobs.push_back({s, l, o});
    auto reports = run_jobs(p.data, p.cfg, jobs);
    write_reports(out, p.seeds, reports);

    // per seed: class_first then category_first for each loss
    auto seeds_csv = out.open("ablation_seeds.csv");
    seeds_csv << "seed,loss,order,probe_acc_fine,probe_acc_coarse,gap\n";
    std::map<std::string, std::array<std::vector<double>, 5>> by_loss;  // fine/coarse per order, |gap|
    for (std::size_t k = 0; k < reports.size(); k += 2) {
        const auto& cls = reports[k];
        const auto& cat = reports[k + 1];
        const double gap = cls.levels.back().probe_accuracy - cat.levels.back().probe_accuracy;
        for (const auto* r : {&cls, &cat}) {
            seeds_csv << r->seed << "," << r->loss << "," << r->hierarchy_order << ","
                      << num(r->levels.back().probe_accuracy) << "," << num(r->levels.front().probe_accuracy) << ","
                      << num(gap) << "\n";
        }
        auto& acc = by_loss[cls.loss];
        acc[0].push_back(cls.levels.back().probe_accuracy);
        acc[1].push_back(cls.levels.front().probe_accuracy);
        acc[2].push_back(cat.levels.back().probe_accuracy);
        acc[3].push_back(cat.levels.front().probe_accuracy);
        acc[4].push_back(std::abs(gap));
    }
    auto f = out.open("ablation.csv");
    f << "loss,order,probe_acc_fine,probe_acc_coarse,gap\n";
    for (auto l : p.cfg.losses) {
        const auto& acc = by_loss.at(to_string(l));
        const double gap = median(acc[4]);
        f << to_string(l) << ",class_first," << num(median(acc[0])) << "," << num(median(acc[1])) << "," << num(gap)
          << "\n";
        f << to_string(l) << ",category_first," << num(median(acc[2])) << "," << num(median(acc[3])) << ","
          << num(gap) << "\n";
    }
    out.manifest("ablate-order", p.cfg, p.seeds, p.cfg.losses);
    log << "ablated " << p.cfg.losses.size() << " losses over " << p.seeds.size() << " seeds\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical contrastive representation learning experiments", "hclr"};
    app.require_subcommand(1);
    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "experiment config file")->required();
        sub->add_option("--out", opt.out, "output directory")->required();
        sub->add_option("--seeds", opt.seeds, "comma-separated seeds, overriding the config");
    };
    auto* run = app.add_subcommand("run", "train and evaluate each configured loss per seed");
    auto* compare = app.add_subcommand("compare", "run several losses under identical settings");
    auto* ablate = app.add_subcommand("ablate-order", "train each loss under both hierarchy orders");
    auto* exp = app.add_subcommand("export-embeddings", "train and write embedding and projection CSVs");
    for (auto* s : {run, compare, ablate, exp}) add_common(s);
    compare->add_option("--losses", opt.losses, "comma-separated loss kinds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(opt, false, out);
        if (exp->parsed()) return cmd_run(opt, true, out);
        if (compare->parsed()) return cmd_compare(opt, out);
        return cmd_ablate(opt, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace hclr
