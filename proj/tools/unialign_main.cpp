#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "unialign/config.hpp"
#include "unialign/dataset.hpp"
#include "unialign/eval.hpp"
#include "unialign/model.hpp"
#include "unialign/traffic.hpp"

namespace fs = std::filesystem;
using namespace unialign;

namespace {

// Exit codes: 0 success, 1 runtime/data failure, 2 usage/config error.
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

RunConfig load_config(const CommonOpts& opts) {
    RunConfig config;
    if (!opts.config_path.empty()) config = RunConfig::load(opts.config_path);
    for (const auto& assignment : opts.overrides) config.apply_override(assignment);
    config.validate();
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "JSON run configuration");
    cmd->add_option("--set", opts.overrides,
                    "Override one config key, dotted path (e.g. --set valley.max_epochs=40)");
}

class JsonlFileLog : public ExperimentLog {
public:
    explicit JsonlFileLog(const std::string& path) : os_(path, std::ios::trunc) {
        if (!os_) throw std::runtime_error("cannot open diagnostics file: " + path);
    }
    void record(const nlohmann::ordered_json& j) override { os_ << j.dump() << '\n'; }

private:
    std::ofstream os_;
};

std::vector<TrainingMode> parse_modes(const std::vector<std::string>& names) {
    std::vector<TrainingMode> modes;
    for (const auto& n : names) modes.push_back(mode_from_string(n));
    if (modes.empty()) throw std::invalid_argument("no modes requested");
    return modes;
}

int cmd_generate(const CommonOpts& common, const std::string& out_path) {
    RunConfig config = load_config(common);
    if (config.gen_domains < 2)
        std::cerr << "warning: single-domain dataset; alignment losses will be disabled\n";
    ShiftSpec spec = ShiftSpec::defaults(config.gen_domains, config.gen_shift_magnitude);
    DomainDataset ds = generate_synthetic(config.gen_classes, config.gen_domains,
                                          config.gen_samples_per_class_domain, spec, config.seed);
    save_dataset(out_path, ds);

    std::cout << "wrote " << ds.total_samples() << " samples to " << out_path << "\n";
    for (int d = 0; d < ds.num_domains(); ++d) {
        std::vector<int> per_class(ds.num_classes, 0);
        for (const auto& s : ds.domains[d]) ++per_class[s.label];
        std::cout << "  domain " << d << ":";
        for (int c = 0; c < ds.num_classes; ++c)
            std::cout << " class" << c << "=" << per_class[c];
        std::cout << "\n";
    }
    return 0;
}

int cmd_extract(const std::string& map_path, const std::string& out_path) {
    if (!fs::exists(map_path))
        throw std::invalid_argument("mapping file does not exist: " + map_path);
    std::ifstream is(map_path);
    nlohmann::json map_json;
    try {
        is >> map_json;
    } catch (const std::exception& e) {
        throw std::runtime_error("mapping parse error: " + std::string(e.what()));
    }

    struct Entry {
        std::string path;
        int label;
        int domain;
    };
    std::vector<Entry> entries;
    int num_classes = map_json.value("classes", 0);
    int num_domains = 0;
    for (const auto& e : map_json.at("entries")) {
        Entry entry{e.at("path").get<std::string>(), e.at("label").get<int>(),
                    e.at("domain").get<int>()};
        if (!fs::exists(entry.path))
            throw std::invalid_argument("pcap does not exist: " + entry.path);
        num_classes = std::max(num_classes, entry.label + 1);
        num_domains = std::max(num_domains, entry.domain + 1);
        entries.push_back(std::move(entry));
    }
    num_classes = std::max(num_classes, 2);

    DomainDataset ds;
    ds.num_classes = num_classes;
    ds.provenance = "pcap";
    ds.domains.resize(num_domains);
    AssemblyCounters totals;
    for (const auto& entry : entries) {
        PcapFile file = parse_pcap(entry.path);
        AssemblyResult res = assemble_flows(file);
        totals.accepted += res.counters.accepted;
        totals.malformed += res.counters.malformed;
        totals.non_ip += res.counters.non_ip;
        totals.non_tcp_udp += res.counters.non_tcp_udp;
        totals.vlan += res.counters.vlan;
        totals.ipv6 += res.counters.ipv6;
        for (const auto& flow : res.flows)
            ds.domains[entry.domain].push_back(extract_features(flow, entry.label, entry.domain));
    }

    // Drop empty trailing domains so the ids stay dense.
    while (!ds.domains.empty() && ds.domains.back().empty()) ds.domains.pop_back();
    for (size_t d = 0; d < ds.domains.size(); ++d)
        if (ds.domains[d].empty())
            throw std::runtime_error("domain " + std::to_string(d) +
                                     " received no flows; domain ids must stay dense");

    if (ds.total_samples() == 0)
        std::cerr << "warning: no flows extracted; writing an empty dataset\n";
    save_dataset(out_path, ds);
    std::cout << "wrote " << ds.total_samples() << " flow samples to " << out_path << "\n";
    std::cout << "counters: accepted=" << totals.accepted << " malformed=" << totals.malformed
              << " non_ip=" << totals.non_ip << " non_tcp_udp=" << totals.non_tcp_udp
              << " vlan=" << totals.vlan << " ipv6=" << totals.ipv6 << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_path, int holdout,
              const std::string& out_path, std::string diag_path, const std::string& mode_name) {
    RunConfig config = load_config(common);
    const TrainingMode mode = mode_from_string(mode_name);
    DomainDataset ds = load_dataset(data_path).dataset;
    if (holdout < 0 || holdout >= ds.num_domains())
        throw std::invalid_argument("holdout domain out of range");
    FoldPlan plan = make_cross_domain_folds(ds, config.seed);

    if (diag_path.empty()) diag_path = out_path + ".diag.jsonl";
    JsonlFileLog log(diag_path);
    SingleRunResult result =
        run_single_fold(ds, plan, static_cast<size_t>(holdout), config, mode, &log);
    save_params(out_path, result.model_config, result.params);

    std::cout << "mode " << to_string(mode) << ", held-out domain " << holdout << "\n";
    std::cout << "  accuracy " << result.outcome.accuracy << ", weighted F1 "
              << result.outcome.weighted_f1 << "\n";
    if (result.outcome.t_s)
        std::cout << "  valley: t_s=" << *result.outcome.t_s << " t_e="
                  << (result.outcome.t_e ? std::to_string(*result.outcome.t_e) : "-")
                  << " merged=" << result.outcome.merged_count << "\n";
    else
        std::cout << "  no valley detected; kept best-accuracy checkpoint (epoch "
                  << result.outcome.best_epoch << ")\n";
    std::cout << "checkpoint: " << out_path << "\ndiagnostics: " << diag_path << "\n";
    return 0;
}

int cmd_xdomain(const CommonOpts& common, const std::string& data_path,
                const std::string& out_path, std::vector<std::string> mode_names,
                std::string diag_path) {
    RunConfig config = load_config(common);
    if (mode_names.empty()) mode_names = config.modes;
    std::vector<TrainingMode> modes = parse_modes(mode_names);
    DomainDataset ds = load_dataset(data_path).dataset;
    FoldPlan plan = make_cross_domain_folds(ds, config.seed);

    if (diag_path.empty()) diag_path = out_path + ".diag.jsonl";
    JsonlFileLog log(diag_path);
    EvalReport report = run_experiment(ds, plan, config, modes, &log);
    report.save(out_path);

    for (const auto& m : report.modes)
        std::cout << m.mode << ": acc_avg=" << m.acc_avg << " f1_avg=" << m.f1_avg << " ("
                  << m.folds.size() << " folds)\n";
    std::cout << "report: " << out_path << "\ndiagnostics: " << diag_path << "\n";
    return 0;
}

int cmd_report(const std::string& in_path) {
    if (!fs::exists(in_path)) throw std::invalid_argument("report does not exist: " + in_path);
    EvalReport report = EvalReport::load(in_path);

    char buf[256];
    std::printf("cross-domain report (seed %llu)\n",
                static_cast<unsigned long long>(report.seed));
    std::printf("%-10s %-19s %-19s %s\n", "mode", "accuracy", "weighted F1", "ovr accuracy");
    for (const auto& m : report.modes) {
        std::snprintf(buf, sizeof(buf), "%-10s %.4f +/- %.4f   %.4f +/- %.4f   %.4f +/- %.4f",
                      m.mode.c_str(), m.acc_avg, m.acc_std, m.f1_avg, m.f1_std, m.acc_ovr_avg,
                      m.acc_ovr_std);
        std::printf("%s\n", buf);
    }

    const ModeSummary* unialign = report.find_mode("unialign");
    const ModeSummary* standard = report.find_mode("standard");
    if (unialign && standard) {
        std::printf("delta unialign-standard: %+.4f accuracy, %+.4f weighted F1\n",
                    unialign->acc_avg - standard->acc_avg, unialign->f1_avg - standard->f1_avg);
    }

    for (const auto& m : report.modes) {
        std::printf("folds (%s):\n", m.mode.c_str());
        for (const auto& f : m.folds) {
            std::string t_s = f.t_s ? std::to_string(*f.t_s) : "-";
            std::string t_e = f.t_e ? std::to_string(*f.t_e) : "-";
            std::printf("  fold %d (test domain %d): acc %.4f, f1 %.4f, t_s %s, t_e %s, %s\n",
                        f.fold, f.test_domain, f.accuracy, f.weighted_f1, t_s.c_str(),
                        t_e.c_str(), f.status.c_str());
        }
    }

    if (unialign && standard) {
        std::printf("jsd ratio standard/unialign per fold:");
        double sum = 0.0;
        int n = 0;
        for (size_t i = 0; i < unialign->folds.size() && i < standard->folds.size(); ++i) {
            if (unialign->folds[i].jsd > 0.0) {
                const double ratio = standard->folds[i].jsd / unialign->folds[i].jsd;
                std::printf(" %.2f", ratio);
                sum += ratio;
                ++n;
            } else {
                std::printf(" -");
            }
        }
        if (n > 0) std::printf(" (mean %.2f)", sum / n);
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust cross-domain traffic-classification training"};
    app.require_subcommand(1);

    CommonOpts gen_common, train_common, xd_common;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate", "Write a synthetic multi-domain dataset");
    add_common(gen, gen_common);
    gen->add_option("-o,--out", gen_out, "Output dataset path")->required();

    std::string extract_map, extract_out;
    auto* extract = app.add_subcommand("extract", "Extract flow features from pcap captures");
    extract->add_option("-m,--map", extract_map, "JSON file mapping pcaps to labels/domains")
        ->required();
    extract->add_option("-o,--out", extract_out, "Output dataset path")->required();

    std::string train_data, train_out, train_diag, train_mode = "unialign";
    int train_holdout = 0;
    auto* train = app.add_subcommand("train", "Train one held-out-domain fold");
    add_common(train, train_common);
    train->add_option("-d,--data", train_data, "Dataset path")->required();
    train->add_option("--holdout", train_holdout, "Held-out test domain id")->required();
    train->add_option("-o,--out", train_out, "Checkpoint output path")->required();
    train->add_option("--diagnostics", train_diag, "Diagnostics JSONL path");
    train->add_option("--mode", train_mode, "unialign|standard|wo-daf|wo-sme");

    std::string xd_data, xd_out, xd_diag;
    std::vector<std::string> xd_modes;
    auto* xdomain = app.add_subcommand("xdomain", "Full cross-domain evaluation");
    add_common(xdomain, xd_common);
    xdomain->add_option("-d,--data", xd_data, "Dataset path")->required();
    xdomain->add_option("-o,--out", xd_out, "Report output path")->required();
    xdomain->add_option("--modes", xd_modes, "Modes to run (default from config)");
    xdomain->add_option("--diagnostics", xd_diag, "Diagnostics JSONL path");

    std::string report_in;
    auto* report = app.add_subcommand("report", "Render a report file");
    report->add_option("-i,--in", report_in, "Report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_common, gen_out);
        if (extract->parsed()) return cmd_extract(extract_map, extract_out);
        if (train->parsed())
            return cmd_train(train_common, train_data, train_holdout, train_out, train_diag,
                             train_mode);
        if (xdomain->parsed()) return cmd_xdomain(xd_common, xd_data, xd_out, xd_modes, xd_diag);
        if (report->parsed()) return cmd_report(report_in);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
