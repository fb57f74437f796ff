#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tpp/error.hpp"
#include "tpp/json_io.hpp"
#include "tpp/pipeline.hpp"

namespace tpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::map<std::string, json>> cartesian(const GridSpec& grid) {
  std::vector<std::map<std::string, json>> cells(1);
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw Error(ErrorCode::BadConfig, "grid entry '" + key + "' has no candidates");
    std::vector<std::map<std::string, json>> next;
    for (const auto& cell : cells) {
      for (const auto& v : values) {
        auto c = cell;
        c[key] = v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

RunnerConfig with_overrides(const RunnerConfig& base, const std::map<std::string, json>& values,
                            const fs::path& output_dir) {
  json j = to_json(base);
  std::vector<std::string> ov;
  for (const auto& [k, v] : values) ov.push_back(k + "=" + v.dump());
  apply_overrides(j, ov);
  RunnerConfig c = runner_config_from_json(j);
  c.expected_dtime_from_data = base.expected_dtime_from_data;
  c.output_dir = output_dir;
  c.validate();
  return c;
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

bool grid_cell_before(const GridCell& a, const GridCell& b) {
  const double da = std::isnan(a.dev_loglik) ? -std::numeric_limits<double>::infinity() : a.dev_loglik;
  const double db = std::isnan(b.dev_loglik) ? -std::numeric_limits<double>::infinity() : b.dev_loglik;
  if (da != db) return da > db;
  for (const auto& [key, va] : a.values) {
    const auto it = b.values.find(key);
    if (it == b.values.end()) continue;
    if (va < it->second) return true;
    if (it->second < va) return false;
  }
  return false;
}

GridResult grid_search(const RunnerConfig& base, const GridSpec& grid) {
  if (grid.empty()) throw Error(ErrorCode::BadConfig, "empty grid");
  const auto cells = cartesian(grid);
  GridResult res;
  std::vector<RunnerConfig> configs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    GridCell cell;
    cell.values = cells[i];
    const RunnerConfig cfg = with_overrides(base, cells[i], base.output_dir / "grid" / ("cell_" + std::to_string(i)));
    configs.push_back(cfg);
    try {
      const TrainResult tr = train(cfg);
      cell.dev_loglik = tr.best_dev_loglik;
      cell.epochs = tr.log.size();
    } catch (const Error& e) {
      cell.dev_loglik = -std::numeric_limits<double>::infinity();
      cell.error = std::string(e.what());
    }
    res.leaderboard.push_back(std::move(cell));
  }
  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grid_cell_before(res.leaderboard[a], res.leaderboard[b]); });
  std::vector<GridCell> ranked;
  for (std::size_t i : order) ranked.push_back(res.leaderboard[i]);
  res.leaderboard = std::move(ranked);
  res.best = configs[order.front()];

  json board = json::array();
  for (const auto& c : res.leaderboard) {
    json row = {{"values", c.values},
                {"dev_loglik", std::isfinite(c.dev_loglik) ? json(c.dev_loglik) : json(nullptr)},
                {"epochs", c.epochs}};
    if (!c.error.empty()) row["error"] = c.error;
    board.push_back(row);
  }
  fs::create_directories(base.output_dir);
  write_json(base.output_dir / "gridsearch.json",
             json{{"experiment_id", base.experiment_id}, {"leaderboard", board}, {"best", to_json(res.best)}});
  return res;
}

std::vector<BenchmarkRow> benchmark(const RunnerConfig& base, const std::vector<std::string>& model_ids,
                                    const std::vector<std::string>& tasks) {
  std::vector<BenchmarkRow> rows;
  json all = json::array();
  for (const auto& id : model_ids) {
    const RunnerConfig cfg = with_overrides(base, {{"model.id", json(id)}}, base.output_dir / id);
    BenchmarkRow row{id, json::object()};
    try {
      const TrainResult tr = train(cfg);
      row.report = evaluate(cfg, *tr.model, tasks);
      row.report["training"] = {{"epochs", tr.log.size()}, {"best_epoch", tr.best_epoch},
                                {"best_dev_loglik", tr.best_dev_loglik}};
      write_json(cfg.output_dir / "results.json", row.report);
    } catch (const Error& e) {
      row.report = {{"model_id", id}, {"error", std::string(e.what())}};
    }
    all.push_back(row.report);
    rows.push_back(std::move(row));
  }

  auto test_ll = [](const json& r) {
    if (r.contains("metrics") && r["metrics"].contains("loglik")) return r["metrics"]["loglik"]["per_event"].get<double>();
    return -std::numeric_limits<double>::infinity();
  };
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double la = test_ll(rows[a].report), lb = test_ll(rows[b].report);
    if (la != lb) return la > lb;
    return rows[a].model_id < rows[b].model_id;
  });
  json board = json::array();
  std::vector<std::string> ll_rows, ne_rows, hz_rows;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& r = rows[order[rank]];
    const double ll = test_ll(r.report);
    json entry = {{"rank", rank + 1}, {"model_id", r.model_id},
                  {"test_loglik_per_event", std::isfinite(ll) ? json(ll) : json(nullptr)}};
    if (r.report.contains("error")) entry["error"] = r.report["error"];
    board.push_back(entry);
    if (!r.report.contains("metrics")) continue;
    const json& m = r.report["metrics"];
    if (m.contains("loglik")) {
      ll_rows.push_back(r.model_id + "," + num(m["loglik"]["per_event"].get<double>()) + "," +
                        num(m["loglik"]["time_per_event"].get<double>()) + "," +
                        num(m["loglik"]["type_per_event"].get<double>()));
    }
    if (m.contains("next_event") && m["next_event"].contains("rmse")) {
      ne_rows.push_back(r.model_id + "," + num(m["next_event"]["rmse"].get<double>()) + "," +
                        num(m["next_event"]["error_rate"].get<double>()));
    }
    if (m.contains("horizon") && m["horizon"].is_array()) {
      for (const auto& h : m["horizon"]) {
        hz_rows.push_back(r.model_id + "," + std::to_string(h["num_events"].get<std::size_t>()) + "," +
                          num(h["mean_otd"].get<double>()));
      }
    }
  }
  fs::create_directories(base.output_dir);
  write_json(base.output_dir / "leaderboard.json", json{{"experiment_id", base.experiment_id}, {"leaderboard", board}});
  write_json(base.output_dir / "results.json", json{{"experiment_id", base.experiment_id}, {"runs", all}});
  write_csv(base.output_dir / "fig_loglik.csv", "model,loglik_per_event,time_loglik_per_event,type_loglik_per_event",
            ll_rows);
  write_csv(base.output_dir / "fig_next_event.csv", "model,rmse,error_rate", ne_rows);
  write_csv(base.output_dir / "fig_horizon.csv", "model,horizon_events,mean_otd", hz_rows);
  return rows;
}

}  // namespace tpp
