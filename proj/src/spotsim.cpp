// Copyright 2026 The spoton Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "spoton/spotsim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace spoton {
namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  size_t pos = 0;
  while (true) {
    const size_t comma = line.find(',', pos);
    std::string cell(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back()))) cell.pop_back();
    size_t lead = 0;
    while (lead < cell.size() && std::isspace(static_cast<unsigned char>(cell[lead]))) ++lead;
    cells.push_back(cell.substr(lead));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string seconds_cell(Duration d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", d.count());
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::vector<std::string> stage_columns(const std::vector<ReportRow>& rows) {
  if (rows.empty()) return {"k33", "k55", "k77", "k99", "k127"};
  std::vector<std::string> cols;
  for (const auto& [name, d] : rows.front().stages) cols.push_back(lower(name));
  return cols;
}

}  // namespace

std::string Money::format(int decimals) const {
  char buf[48];
  std::snprintf(buf, sizeof buf, "$%.*f", decimals, dollars());
  return buf;
}

void PricingModel::validate() const {
  if (spot_rate < 0 || on_demand_rate < 0 || storage_rate < 0 || provisioned_storage < 0) {
    throw std::invalid_argument("pricing rates and storage must be >= 0");
  }
}

Money PricingModel::monthly_storage_cost() const {
  return Money{std::llround(provisioned_storage / 100.0 * storage_rate * 1e6)};
}

Money cost(Duration duration, double rate_per_hour) {
  if (duration.count() < 0) throw std::invalid_argument("cost of a negative duration");
  return Money{std::llround(duration.count() * rate_per_hour * 1e6 / 3600.0)};
}

double savings(Money cost_a, Money cost_b) {
  if (cost_b.micros == 0) throw std::invalid_argument("savings against a zero cost is undefined");
  return (1.0 - static_cast<double>(cost_a.micros) / static_cast<double>(cost_b.micros)) * 100.0;
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kPeriodic: return "periodic";
    case PolicyKind::kBoundaryOnly: return "boundary_only";
    case PolicyKind::kNone: break;
  }
  return "none";
}

Duration SimParams::total_work() const {
  Duration w{0};
  for (const auto d : stage_durations) w += d;
  return w;
}

void SimParams::validate() const {
  for (const auto d : stage_durations) {
    if (!(d.count() >= 0) || std::isinf(d.count())) {
      throw std::invalid_argument("stage durations must be finite and >= 0");
    }
  }
  if (!(checkpoint_overhead.count() >= 0) || !(restore_time.count() >= 0) ||
      !(reprovision_delay.count() >= 0)) {
    throw std::invalid_argument("checkpoint overhead, restore time and reprovision delay must be >= 0");
  }
  if (!(eviction_interval.count() > 0)) throw std::invalid_argument("eviction interval must be > 0");
  if (policy.kind == PolicyKind::kPeriodic && !(policy.tau.count() > 0)) {
    throw std::invalid_argument("periodic policy needs tau > 0");
  }
  if (horizon_cap && !(horizon_cap->count() >= 0)) throw std::invalid_argument("horizon cap must be >= 0");
}

SimResult simulate(const SimParams& params, const PricingModel& pricing) {
  params.validate();
  pricing.validate();
  const double W = params.total_work().count();
  const double cap = params.horizon_cap ? params.horizon_cap->count() : 100.0 * W;
  const double E = params.eviction_interval.count();
  const double c = params.checkpoint_overhead.count();
  const double recovery = params.restore_time.count() + params.reprovision_delay.count();
  const double tau = params.policy.tau.count();

  // Stage ends; interior ones (0 < b < W, deduplicated) are boundary points.
  std::vector<double> ends;
  std::vector<double> interior;
  double acc = 0;
  for (const auto d : params.stage_durations) {
    acc += d.count();
    ends.push_back(acc);
    if (acc > 0 && acc < W && (interior.empty() || interior.back() != acc)) interior.push_back(acc);
  }
  // Time at which work last rose through each stage end.
  std::vector<double> end_time(ends.size(), 0.0);
  auto record_crossings = [&](double w_from, double w_to, double t_from) {
    for (size_t i = 0; i < ends.size(); ++i) {
      if (w_from < ends[i] && ends[i] <= w_to) end_time[i] = t_from + (ends[i] - w_from);
    }
  };

  enum class Phase { kWorking, kCheckpointing, kRecovering };
  Phase phase = Phase::kWorking;
  double t = 0, w = 0, committed = 0;
  double next_evict = E;
  double phase_end = 0, checkpoint_work = 0;
  SimResult r;
  double lost = 0;

  auto fail = [&] {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "no completion within %.0fs (%s policy, E=%.0fs); progress stalls at %.0fs of %.0fs",
                  cap, std::string(to_string(params.policy.kind)).c_str(), E, committed, W);
    throw NonconvergenceError(buf);
  };

  while (true) {
    if (t > cap) fail();
    bool evict = false;
    switch (phase) {
      case Phase::kWorking: {
        if (w >= W) {
          r.makespan = Duration(t);
          r.lost_work = Duration(lost);
          r.spot_cost = cost(r.makespan, pricing.spot_rate);
          r.on_demand_cost = cost(r.makespan, pricing.on_demand_rate);
          double prev = 0;
          for (const double et : end_time) {
            r.stage_wall.push_back(Duration(et - prev));
            prev = et;
          }
          return r;
        }
        double target = W;
        if (params.policy.kind == PolicyKind::kPeriodic) {
          target = std::min(committed + tau, W);
        } else if (params.policy.kind == PolicyKind::kBoundaryOnly) {
          const auto it = std::upper_bound(interior.begin(), interior.end(), w);
          if (it != interior.end()) target = *it;
        }
        const double reach = t + (target - w);
        if (reach <= next_evict) {
          record_crossings(w, target, t);
          t = reach;
          w = target;
          if (w >= W) {
            if (t > cap) fail();
            continue;
          }
          phase = Phase::kCheckpointing;
          phase_end = t + c;
          checkpoint_work = w;
        } else {
          record_crossings(w, w + (next_evict - t), t);
          w += next_evict - t;
          t = next_evict;
          evict = true;
        }
        break;
      }
      case Phase::kCheckpointing:
        if (phase_end <= next_evict) {
          t = phase_end;
          committed = checkpoint_work;
          ++r.checkpoints_taken;
          phase = Phase::kWorking;
        } else {
          t = next_evict;
          evict = true;
        }
        break;
      case Phase::kRecovering:
        if (phase_end <= next_evict) {
          t = phase_end;
          phase = Phase::kWorking;
        } else {
          t = next_evict;
          evict = true;
        }
        break;
    }
    if (evict) {
      lost += w - committed;
      w = committed;
      ++r.evictions;
      phase = Phase::kRecovering;
      phase_end = t + recovery;
      next_evict += E;
    }
  }
}

std::string format_hms(Duration d) {
  const auto total = static_cast<long long>(std::llround(d.count()));
  const long long h = total / 3600, m = (total % 3600) / 60, s = total % 60;
  char buf[40];
  if (h > 0) {
    std::snprintf(buf, sizeof buf, "%lld:%02lld:%02lld", h, m, s);
  } else {
    std::snprintf(buf, sizeof buf, "%lld:%02lld", m, s);
  }
  return buf;
}

std::optional<Duration> parse_hms(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::vector<double> parts;
  size_t pos = 0;
  while (true) {
    const size_t colon = text.find(':', pos);
    const std::string part(text.substr(pos, colon == std::string_view::npos ? colon : colon - pos));
    if (part.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (end != part.c_str() + part.size() || !(v >= 0)) return std::nullopt;
    parts.push_back(v);
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  if (parts.size() > 3) return std::nullopt;
  for (size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] >= 60) return std::nullopt;
  }
  double seconds = 0;
  for (const double p : parts) seconds = seconds * 60 + p;
  return Duration(seconds);
}

ReportRow row_from_ledger(const RunLedger& ledger, std::string eviction, std::string ckpt_type) {
  ReportRow row;
  row.stages = ledger.stage_times;
  row.total = ledger.makespan;
  row.eviction = std::move(eviction);
  row.ckpt_type = std::move(ckpt_type);
  return row;
}

ReportRow row_from_sim(const SimResult& result,
                       const std::vector<std::string>& stage_names, std::string eviction,
                       std::string ckpt_type) {
  ReportRow row;
  for (size_t i = 0; i < result.stage_wall.size(); ++i) {
    const std::string name = i < stage_names.size() ? stage_names[i] : "S" + std::to_string(i + 1);
    row.stages.emplace_back(name, result.stage_wall[i]);
  }
  row.total = result.makespan;
  row.eviction = std::move(eviction);
  row.ckpt_type = std::move(ckpt_type);
  return row;
}

std::string report_csv(const std::vector<ReportRow>& rows, const PricingModel& pricing) {
  const auto cols = stage_columns(rows);
  std::ostringstream out;
  for (const auto& c : cols) out << c << ',';
  out << "total,eviction,ckpt_type,spot_cost,ondemand_cost\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < cols.size(); ++i) {
      if (i < row.stages.size()) out << seconds_cell(row.stages[i].second);
      out << ',';
    }
    char money[64];
    std::snprintf(money, sizeof money, "%.6f,%.6f", cost(row.total, pricing.spot_rate).dollars(),
                  cost(row.total, pricing.on_demand_rate).dollars());
    out << seconds_cell(row.total) << ',' << row.eviction << ',' << row.ckpt_type << ',' << money
        << '\n';
  }
  return out.str();
}

std::string report_text(const std::vector<ReportRow>& rows, const PricingModel& pricing) {
  std::vector<std::string> header;
  for (const auto& c : stage_columns(rows)) header.push_back(c);
  const size_t n_stages = header.size();
  for (const char* h : {"total", "spot cost", "on-demand cost", "eviction", "checkpoint type"}) {
    header.emplace_back(h);
  }
  std::vector<std::vector<std::string>> table = {header};
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (size_t i = 0; i < n_stages; ++i) {
      cells.push_back(i < row.stages.size() ? format_hms(row.stages[i].second) : "");
    }
    cells.push_back(format_hms(row.total));
    cells.push_back(cost(row.total, pricing.spot_rate).format(2));
    cells.push_back(cost(row.total, pricing.on_demand_rate).format(2));
    cells.push_back(row.eviction);
    cells.push_back(row.ckpt_type);
    table.push_back(std::move(cells));
  }
  std::vector<size_t> width(header.size(), 0);
  for (const auto& r : table) {
    for (size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  for (const auto& r : table) {
    std::string line;
    for (size_t i = 0; i < r.size(); ++i) {
      line += r[i] + std::string(width[i] - r[i].size(), ' ');
      if (i + 1 < r.size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

std::vector<ReportRow> parse_table_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  std::vector<std::string> header;
  size_t total_col = 0;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_csv_line(line);
    if (header.empty()) {
      header = cells;
      const auto it = std::find(header.begin(), header.end(), "total");
      if (it == header.end() || it + 2 >= header.end() || *(it + 1) != "eviction" ||
          *(it + 2) != "ckpt_type") {
        throw std::invalid_argument("line " + std::to_string(line_no) +
                                    ": header needs stage columns then total,eviction,ckpt_type");
      }
      total_col = static_cast<size_t>(it - header.begin());
      continue;
    }
    if (cells.size() < total_col + 3) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected at least " +
                                  std::to_string(total_col + 3) + " cells");
    }
    ReportRow row;
    for (size_t i = 0; i <= total_col; ++i) {
      const auto d = parse_hms(cells[i]);
      if (!d) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": bad duration '" +
                                    cells[i] + "' in column " + header[i]);
      }
      if (i < total_col) {
        row.stages.emplace_back(header[i], *d);
      } else {
        row.total = *d;
      }
    }
    row.eviction = cells[total_col + 1];
    row.ckpt_type = cells[total_col + 2];
    rows.push_back(std::move(row));
  }
  return rows;
}

Calibration calibrate(const std::vector<CalibrationTarget>& targets, Duration c_max,
                      Duration c_step, Duration r_max, Duration r_step) {
  if (!(c_step.count() > 0) || !(r_step.count() > 0)) {
    throw std::invalid_argument("calibration grid steps must be > 0");
  }
  std::optional<Calibration> best;
  const PricingModel pricing;
  const int nc = static_cast<int>(std::floor(c_max.count() / c_step.count() + 1e-9));
  const int nr = static_cast<int>(std::floor(r_max.count() / r_step.count() + 1e-9));
  for (int i = 0; i <= nc; ++i) {
    for (int j = 0; j <= nr; ++j) {
      Calibration cand{c_step * i, r_step * j, 0};
      bool ok = true;
      for (const auto& target : targets) {
        SimParams p = target.params;
        p.checkpoint_overhead = cand.checkpoint_overhead;
        p.restore_time = cand.recovery;
        p.reprovision_delay = Duration(0);
        try {
          const double err = (simulate(p, pricing).makespan - target.observed).count();
          cand.sse += err * err;
        } catch (const NonconvergenceError&) {
          ok = false;
          break;
        }
      }
      if (ok && (!best || cand.sse < best->sse)) best = cand;
    }
  }
  if (!best) throw NonconvergenceError("no grid point converges for every calibration target");
  return *best;
}

}  // namespace spoton
