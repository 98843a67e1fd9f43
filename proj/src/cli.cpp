#include "hdsafebo/cli.hpp"

#include "hdsafebo/errors.hpp"
#include "hdsafebo/http.hpp"
#include "hdsafebo/serialization.hpp"
#include "hdsafebo/session.hpp"

#include <CLI11.hpp>

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace hdsafebo::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << content;
    if (!out) throw InvalidInput("write to " + path.string() + " failed");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

json aggregate_json(const benchmarks::Aggregate& a) {
    return json{{"mean", io::number_to_json(a.mean)}, {"standard_error", io::number_to_json(a.standard_error)},
                {"count", a.count}};
}

fs::path trajectory_path(const fs::path& out_dir, const std::string& method, std::uint64_t seed,
                         const std::string& ext) {
    return out_dir / "trajectories" / method / ("seed-" + std::to_string(seed) + ext);
}

json run_context(const config::ToolkitConfig& cfg, const std::string& method, std::uint64_t seed) {
    return json{{"method", method},
                {"seed", seed},
                {"task", io::to_json(cfg.bench.task)},
                {"budget", cfg.bench.options.budget},
                {"init_count", cfg.bench.options.init_count}};
}

}  // namespace

void write_bench_artifacts(const fs::path& out_dir, const config::ToolkitConfig& cfg,
                           const benchmarks::BenchmarkReport& report) {
    fs::create_directories(out_dir);
    const json resolved = config::to_json(cfg);
    write_file(out_dir / "resolved_config.json", resolved.dump(2) + "\n");

    std::ostringstream csv;
    csv << "method,seed,objective,safety,violation,evaluations,state_hash,failure\n";
    std::ostringstream summary_csv;
    summary_csv << "method,objective_mean,objective_se,objective_n,safety_mean,safety_se,violation_mean,violation_se,seeds\n";
    json methods = json::array();
    for (const auto& m : report.methods) {
        json seeds = json::array();
        for (const auto& s : m.seeds) {
            json row{{"seed", s.seed}, {"failure", s.failure ? json(*s.failure) : json(nullptr)}};
            std::string hash;
            if (s.record) {
                const json context = run_context(cfg, m.name, s.seed);
                std::ostringstream log;
                io::write_run_log(log, *s.record, context);
                write_file(trajectory_path(out_dir, m.name, s.seed, ".jsonl"), log.str());
                const json summary = io::run_summary(*s.record, context);
                write_file(trajectory_path(out_dir, m.name, s.seed, ".summary.json"), summary.dump(2) + "\n");
                hash = summary["state_hash"].get<std::string>();
                row["final_metrics"] = io::to_json(s.record->final_metrics);
                row["state_hash"] = hash;
                const auto& fm = s.record->final_metrics;
                csv << csv_field(m.name) << ',' << s.seed << ',' << (fm.best_feasible ? fmt(*fm.best_feasible) : "")
                    << ',' << fmt(fm.safe_ratio) << ',' << fmt(fm.cumulative_violation) << ',' << fm.evaluations << ','
                    << hash << ',' << csv_field(s.failure.value_or("")) << '\n';
            } else {
                csv << csv_field(m.name) << ',' << s.seed << ",,,,0,," << csv_field(s.failure.value_or("")) << '\n';
            }
            seeds.push_back(std::move(row));
        }
        methods.push_back(json{{"name", m.name},
                               {"objective", aggregate_json(m.objective)},
                               {"safety", aggregate_json(m.safety)},
                               {"violation", aggregate_json(m.violation)},
                               {"seeds", seeds}});
        summary_csv << csv_field(m.name) << ',' << fmt(m.objective.mean) << ',' << fmt(m.objective.standard_error) << ','
                    << m.objective.count << ',' << fmt(m.safety.mean) << ',' << fmt(m.safety.standard_error) << ','
                    << fmt(m.violation.mean) << ',' << fmt(m.violation.standard_error) << ',' << m.seeds.size() << '\n';
    }
    const json doc{{"schema", "hdsafebo.bench_report"},
                   {"schema_version", io::kSchemaVersion},
                   {"toolkit_version", io::kToolkitVersion},
                   {"config", resolved},
                   {"task", io::to_json(report.task)},
                   {"budget", report.budget},
                   {"init_count", report.init_count},
                   {"seeds", report.seeds},
                   {"methods", methods}};
    write_file(out_dir / "report.json", doc.dump(2) + "\n");
    write_file(out_dir / "report.csv", csv.str());
    write_file(out_dir / "summary.csv", summary_csv.str());
}

Eigen::MatrixXd read_matrix_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::vector<double> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
            if (p == end) break;
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc() || (res.ptr < end && !std::isspace(static_cast<unsigned char>(*res.ptr)))) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": not a number");
            }
            row.push_back(v);
            p = res.ptr;
        }
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(rows.front().size()) + " columns, found " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path.string() + ": no data rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return m;
}

std::string render_curves_svg(const std::vector<std::string>& names,
                              const std::vector<std::vector<optimizer::RunRecord>>& runs) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
    struct Series {
        std::vector<double> x, y;
    };
    const auto mean_curve = [](const std::vector<optimizer::RunRecord>& recs, int which) {
        Series s;
        std::size_t len = 0;
        for (const auto& r : recs) len = std::max(len, r.iterations.size() + 1);
        for (std::size_t i = 0; i < len; ++i) {
            double sum = 0.0, x = 0.0;
            int n = 0;
            for (const auto& r : recs) {
                if (i > r.iterations.size()) continue;
                const optimizer::Metrics& m = i == 0 ? r.initial_metrics : r.iterations[i - 1].metrics;
                double v = 0.0;
                if (which == 0) {
                    if (!m.best_feasible) continue;
                    v = *m.best_feasible;
                } else {
                    v = which == 1 ? m.safe_ratio : m.cumulative_violation;
                }
                sum += v;
                x = static_cast<double>(m.evaluations);
                ++n;
            }
            if (n > 0) {
                s.x.push_back(x);
                s.y.push_back(sum / n);
            }
        }
        return s;
    };

    const char* titles[] = {"Objective (best feasible)", "Safety (safe ratio)", "Violation (cumulative)"};
    const double pw = 360, ph = 240, ml = 60, mt = 30, gap = 30;
    const double width = ml + 3 * (pw + gap) + 20;
    const double height = mt + ph + 50 + 18.0 * static_cast<double>(names.size());
    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int panel = 0; panel < 3; ++panel) {
        std::vector<Series> series;
        double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
        for (const auto& recs : runs) {
            series.push_back(mean_curve(recs, panel));
            for (std::size_t i = 0; i < series.back().x.size(); ++i) {
                xmin = std::min(xmin, series.back().x[i]);
                xmax = std::max(xmax, series.back().x[i]);
                ymin = std::min(ymin, series.back().y[i]);
                ymax = std::max(ymax, series.back().y[i]);
            }
        }
        if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        const double ox = ml + panel * (pw + gap);
        const auto px = [&](double x) { return ox + (x - xmin) / (xmax - xmin) * pw; };
        const auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };
        svg << "<text x=\"" << ox + pw / 2 << "\" y=\"" << mt - 10 << "\" text-anchor=\"middle\">" << titles[panel]
            << "</text>\n";
        svg << "<rect x=\"" << ox << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
            << "\" fill=\"none\" stroke=\"#444\"/>\n";
        svg << "<text x=\"" << ox - 4 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\">" << fmt(ymax) << "</text>\n";
        svg << "<text x=\"" << ox - 4 << "\" y=\"" << mt + ph << "\" text-anchor=\"end\">" << fmt(ymin) << "</text>\n";
        svg << "<text x=\"" << ox << "\" y=\"" << mt + ph + 14 << "\">" << fmt(xmin) << "</text>\n";
        svg << "<text x=\"" << ox + pw << "\" y=\"" << mt + ph + 14 << "\" text-anchor=\"end\">" << fmt(xmax)
            << "</text>\n";
        svg << "<text x=\"" << ox + pw / 2 << "\" y=\"" << mt + ph + 28 << "\" text-anchor=\"middle\">evaluations</text>\n";
        for (std::size_t k = 0; k < series.size(); ++k) {
            if (series[k].x.empty()) continue;
            svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kColors[k % 7] << "\" points=\"";
            for (std::size_t i = 0; i < series[k].x.size(); ++i) {
                svg << px(series[k].x[i]) << ',' << py(series[k].y[i]) << ' ';
            }
            svg << "\"/>\n";
        }
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
        const double y = mt + ph + 48 + 18.0 * static_cast<double>(k);
        svg << "<line x1=\"" << ml << "\" y1=\"" << y - 4 << "\" x2=\"" << ml + 24 << "\" y2=\"" << y - 4
            << "\" stroke-width=\"2\" stroke=\"" << kColors[k % 7] << "\"/>";
        svg << "<text x=\"" << ml + 30 << "\" y=\"" << y << "\">" << names[k] << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string bind;
    std::string data_dir;
};

config::ToolkitConfig resolve_config(const CommonFlags& f) {
    config::ToolkitConfig cfg = f.config.empty() ? config::ToolkitConfig{} : config::load_config(f.config);
    config::apply_environment(cfg);
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.data_dir.empty()) cfg.serve.data_dir = f.data_dir;
    if (!f.bind.empty()) config::apply_bind(cfg.serve, f.bind);
    return cfg;
}

int cmd_bench(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    config::ToolkitConfig cfg = resolve_config(f);
    if (cfg.bench.methods.empty()) throw ParseError("bench.methods: the config defines no benchmark methods");
    if (f.seed) {
        auto& seeds = cfg.bench.options.seeds;
        const std::size_t n = seeds.size();
        seeds.clear();
        for (std::size_t i = 0; i < n; ++i) seeds.push_back(*f.seed + i);
    }
    const auto report = benchmarks::run_benchmark(cfg.bench.methods, cfg.bench.task, cfg.bench.options);
    write_bench_artifacts(cfg.out_dir, cfg, report);
    bool failed = false;
    out << std::left << std::setw(16) << "method" << std::setw(22) << "objective" << std::setw(22) << "safety"
        << "violation\n";
    for (const auto& m : report.methods) {
        const auto cell = [](const benchmarks::Aggregate& a) {
            std::ostringstream s;
            s << std::fixed << std::setprecision(3) << a.mean << " +- " << a.standard_error;
            return s.str();
        };
        out << std::setw(16) << m.name << std::setw(22) << cell(m.objective) << std::setw(22) << cell(m.safety)
            << cell(m.violation) << '\n';
        for (const auto& s : m.seeds) {
            if (s.failure) {
                failed = true;
                err << "method " << m.name << " seed " << s.seed << " failed: " << *s.failure << '\n';
            }
        }
    }
    out << "artifacts written to " << cfg.out_dir << '\n';
    return failed ? kExitRuntime : kExitOk;
}

int cmd_serve(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    config::ToolkitConfig cfg = resolve_config(f);
    if (f.seed) cfg.optimizer.seed = *f.seed;
    sigset_t set, old;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, &old);
    int code = kExitOk;
    try {
        session::SessionService service(cfg.serve.data_dir);
        http::ApiServer server(service, cfg.optimizer, cfg.serve.threads);
        const int port = server.bind(cfg.serve.bind, cfg.serve.port);
        out << "serving " << service.list().size() << " session(s) from " << cfg.serve.data_dir << " on "
            << cfg.serve.bind << ":" << port << std::endl;
        std::thread waiter([&server, set] {
            int sig = 0;
            sigwait(&set, &sig);
            server.stop();
        });
        server.listen();
        // Wake the waiter if the server stopped for another reason.
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
        out << "stopped" << std::endl;
    } catch (const Error& e) {
        err << "serve: " << e.what() << '\n';
        code = kExitRuntime;
    }
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
    return code;
}

int cmd_embed_diag(const std::string& data_path, const std::string& map_path, int pca_dim, int probe_count,
                   const std::string& kernel, double lengthscale, double output_scale, std::ostream& out) {
    const Eigen::MatrixXd data = read_matrix_file(data_path);
    embedding::EmbeddingMap map = embedding::EmbeddingMap::identity(data.cols());
    std::string source = "identity";
    if (!map_path.empty()) {
        map = embedding::load_map(map_path);
        source = "file";
    } else if (pca_dim > 0) {
        map = embedding::fit_pca(data, pca_dim);
        source = "pca";
    }
    if (map.source_dim() != data.cols()) {
        throw InvalidInput("map expects dimension " + std::to_string(map.source_dim()) + " but data has " +
                           std::to_string(data.cols()));
    }
    const Eigen::Index n_probe = std::min<Eigen::Index>(probe_count, data.rows());
    gp::GpDataset probe;
    probe.inputs = data.topRows(n_probe);
    // Any targets work for the gap check; use the centred coordinate sum.
    const Eigen::RowVectorXd mean = data.colwise().mean();
    probe.targets = (probe.inputs.rowwise() - mean).rowwise().sum();
    const gp::KernelSpec spec{gp::parse_kernel_family(kernel), lengthscale, output_scale};
    const embedding::IsometryReport rep = embedding::isometry_diagnostics(map, data, spec, probe);
    const json doc{{"map", json{{"source", source},
                                {"kind", embedding::embedding_kind_name(map.kind())},
                                {"source_dim", map.source_dim()},
                                {"latent_dim", map.latent_dim()},
                                {"degenerate", map.degenerate()}}},
                   {"points", data.rows()},
                   {"probe_points", n_probe},
                   {"distance_correlation", io::number_to_json(rep.distance_correlation)},
                   {"mean_gp_mean_gap", io::number_to_json(rep.mean_gp_mean_gap)},
                   {"mean_gp_var_gap", io::number_to_json(rep.mean_gp_var_gap)},
                   {"sample_count", rep.sample_count}};
    out << doc.dump(2) << '\n';
    return kExitOk;
}

int cmd_replay(const std::string& path, const std::string& summary_path, bool verify, std::ostream& out,
               std::ostream& err) {
    std::ifstream probe(path);
    if (!probe) throw NotFound("cannot open " + path);
    std::string first;
    std::getline(probe, first);
    probe.close();
    json first_json;
    try {
        first_json = json::parse(first);
    } catch (const json::exception&) {
        err << "replay: first bad seq 1: line is not valid JSON\n";
        out << json{{"first_bad_seq", 1}, {"message", "line is not valid JSON"}}.dump(2) << '\n';
        return kExitRuntime;
    }

    json doc;
    std::optional<optimizer::Metrics> metrics;
    std::string hash;
    bool bad = false;
    if (first_json.value("kind", "") == "created") {
        const session::LogReplay r = session::replay_session_log(path, verify);
        doc = json{{"kind", "session"},
                   {"complete", r.ok},
                   {"torn_tail", r.torn_tail},
                   {"last_valid_seq", r.last_valid_seq},
                   {"first_bad_seq", r.first_bad_seq ? json(*r.first_bad_seq) : json(nullptr)},
                   {"message", r.message}};
        if (r.snapshot) {
            doc["status"] = session::status_name(r.snapshot->status);
            metrics = r.snapshot->record.final_metrics;
            hash = r.snapshot->state_hash;
        }
        if (r.first_bad_seq) {
            bad = true;
            err << "replay: first bad seq " << *r.first_bad_seq << ": " << r.message << '\n';
        }
    } else {
        std::ifstream in(path);
        const io::ReplayResult r = io::replay_run_log(in);
        doc = json{{"kind", "run"},
                   {"complete", r.complete},
                   {"truncated", r.truncated},
                   {"last_valid_seq", r.last_valid_seq},
                   {"first_bad_seq", r.first_bad_seq ? json(*r.first_bad_seq) : json(nullptr)},
                   {"message", r.message}};
        if (r.record) {
            metrics = r.record->final_metrics;
            hash = r.state_hash;
        }
        if (r.first_bad_seq) {
            bad = true;
            err << "replay: first bad seq " << *r.first_bad_seq << ": " << r.message << '\n';
        } else if (r.truncated) {
            err << "replay: log is truncated; replayed through seq " << r.last_valid_seq << '\n';
        }
    }
    if (metrics) doc["final_metrics"] = io::to_json(*metrics);
    doc["state_hash"] = hash;

    if (!summary_path.empty() && !bad) {
        const json summary = json::parse(read_file(summary_path));
        const bool same_metrics =
            metrics && io::metrics_from_json(summary.at("final_metrics"), "final_metrics") == *metrics;
        const bool same_hash = summary.value("state_hash", "") == hash;
        doc["summary_match"] = same_metrics && same_hash;
        if (!same_metrics || !same_hash) {
            err << "replay: recomputed " << (same_metrics ? "state hash" : "metrics") << " differ from " << summary_path
                << '\n';
            bad = true;
        }
    }
    out << doc.dump(2) << '\n';
    return bad ? kExitRuntime : kExitOk;
}

int cmd_plot(const std::string& dir, const std::string& output, std::ostream& out) {
    const json report = json::parse(read_file(fs::path(dir) / "report.json"));
    std::vector<std::string> names;
    std::vector<std::vector<optimizer::RunRecord>> runs;
    for (const auto& m : report.at("methods")) {
        names.push_back(m.at("name").get<std::string>());
        runs.emplace_back();
        for (const auto& s : m.at("seeds")) {
            const fs::path log = trajectory_path(dir, names.back(), s.at("seed").get<std::uint64_t>(), ".jsonl");
            if (!fs::exists(log)) continue;
            std::ifstream in(log);
            io::ReplayResult r = io::replay_run_log(in);
            if (r.first_bad_seq) {
                throw InvalidInput(log.string() + ": first bad seq " + std::to_string(*r.first_bad_seq) + ": " + r.message);
            }
            if (r.record) runs.back().push_back(std::move(*r.record));
        }
    }
    const fs::path target = output.empty() ? fs::path(dir) / "curves.svg" : fs::path(output);
    write_file(target, render_curves_svg(names, runs));
    out << "wrote " << target.string() << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Local optimistic safe Bayesian optimisation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::kToolkitVersion));

    CommonFlags flags;
    std::uint64_t seed_value = 0;
    const auto add_common = [&](CLI::App* sub, bool serve) {
        sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed_value, "Override the seed (bench: first task seed; serve: optimizer seed)");
        if (serve) {
            sub->add_option("--bind", flags.bind, "HOST, HOST:PORT or :PORT");
            sub->add_option("--data-dir", flags.data_dir, "Session data directory");
        } else {
            sub->add_option("--out-dir", flags.out_dir, "Artifact directory");
        }
    };

    CLI::App* bench = app.add_subcommand("bench", "Run a benchmark and write report artifacts");
    add_common(bench, false);
    bench->get_option("--config")->required();

    CLI::App* serve = app.add_subcommand("serve", "Serve the ask-tell session API");
    add_common(serve, true);

    CLI::App* diag = app.add_subcommand("embed-diag", "Distance-preservation diagnostics of an embedding");
    std::string data_path, map_path, kernel = "matern52";
    int pca_dim = 0, probe = 20;
    double lengthscale = 1.0, output_scale = 1.0;
    diag->add_option("--data", data_path, "Points, one per row")->required()->check(CLI::ExistingFile);
    auto* map_opt = diag->add_option("--map", map_path, "Linear map file")->check(CLI::ExistingFile);
    diag->add_option("--pca", pca_dim, "Fit a PCA map with this latent dimension")->excludes(map_opt)->check(CLI::PositiveNumber);
    diag->add_option("--probe", probe, "Points used for the GP gap check")->check(CLI::PositiveNumber);
    diag->add_option("--kernel", kernel, "matern52 or squared_exponential");
    diag->add_option("--lengthscale", lengthscale)->check(CLI::PositiveNumber);
    diag->add_option("--output-scale", output_scale)->check(CLI::PositiveNumber);

    CLI::App* replay = app.add_subcommand("replay", "Recompute metrics and state hash from a run or session log");
    std::string log_path, summary_path;
    bool verify = false;
    replay->add_option("log", log_path, "Run log (.jsonl) or session event log")->required();
    replay->add_option("--summary", summary_path, "Summary document to compare against")->check(CLI::ExistingFile);
    replay->add_flag("--verify-proposals", verify, "Session logs: recompute every proposal");

    CLI::App* plot = app.add_subcommand("plot", "Render Objective/Safety/Violation curves of a bench output as SVG");
    std::string plot_dir, plot_out;
    plot->add_option("--out-dir", plot_dir, "Bench artifact directory")->required()->check(CLI::ExistingDirectory);
    plot->add_option("--output", plot_out, "SVG path (default <out-dir>/curves.svg)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    for (CLI::App* sub : {bench, serve}) {
        if (sub->parsed() && sub->count("--seed") > 0) flags.seed = seed_value;
    }

    try {
        if (bench->parsed()) return cmd_bench(flags, out, err);
        if (serve->parsed()) return cmd_serve(flags, out, err);
        if (diag->parsed()) return cmd_embed_diag(data_path, map_path, pca_dim, probe, kernel, lengthscale, output_scale, out);
        if (replay->parsed()) return cmd_replay(log_path, summary_path, verify, out, err);
        if (plot->parsed()) return cmd_plot(plot_dir, plot_out, out);
    } catch (const Error& e) {
        err << "error [" << error_code_name(e.code()) << "]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const json::exception& e) {
        err << "error [ParseError]: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace hdsafebo::cli
