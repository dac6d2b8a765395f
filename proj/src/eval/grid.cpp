// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/eval/grid.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "m3s/errors.hpp"

namespace m3s::eval {
namespace {

void accumulate(RougeScore& into, const RougeScore& s) {
  into.precision += s.precision;
  into.recall += s.recall;
  into.f1 += s.f1;
  into.empty_reference = into.empty_reference || s.empty_reference;
}

void divide(RougeScore& s, double n) {
  s.precision /= n;
  s.recall /= n;
  s.f1 /= n;
}

nlohmann::json score_json(const RougeScore& s) {
  return {{"p", s.precision}, {"r", s.recall}, {"f", s.f1}};
}

}  // namespace

RougeReport mean_report(const std::vector<RougeReport>& reports) {
  RougeReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    accumulate(m.r1, r.r1);
    accumulate(m.r2, r.r2);
    accumulate(m.rl, r.rl);
  }
  const double n = static_cast<double>(reports.size());
  divide(m.r1, n);
  divide(m.r2, n);
  divide(m.rl, n);
  return m;
}

const GridCell& GridResult::cell(const data::Direction& d) const {
  for (const auto& c : cells) {
    if (c.direction == d) return c;
  }
  throw DataError("no grid cell for direction " + d.to_string());
}

double GridResult::cross_lingual_r1() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.direction.monolingual()) continue;
    sum += c.mean.r1.f1;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::string GridResult::table() const {
  std::vector<std::string> srcs, tgts;
  for (const auto& c : cells) {
    if (std::find(srcs.begin(), srcs.end(), c.direction.src) == srcs.end()) srcs.push_back(c.direction.src);
    if (std::find(tgts.begin(), tgts.end(), c.direction.tgt) == tgts.end()) tgts.push_back(c.direction.tgt);
  }
  auto fmt = [](const RougeReport& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f/%.2f/%.2f", 100 * r.r1.f1, 100 * r.r2.f1, 100 * r.rl.f1);
    return std::string(buf);
  };
  const int width = 18;
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s", "src\\tgt");
  out << buf;
  for (const auto& t : tgts) {
    std::snprintf(buf, sizeof buf, "%*s", width, t.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%*s", width, "Avg.");
  out << buf << '\n';
  for (const auto& s : srcs) {
    std::snprintf(buf, sizeof buf, "%-8s", s.c_str());
    out << buf;
    for (const auto& t : tgts) {
      std::string text = "-";
      for (const auto& c : cells) {
        if (c.direction.src == s && c.direction.tgt == t) text = fmt(c.mean);
      }
      std::snprintf(buf, sizeof buf, "%*s", width, text.c_str());
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%*s", width, fmt(row_average.at(s)).c_str());
    out << buf << '\n';
  }
  out << "(ROUGE-1/ROUGE-2/ROUGE-L F1 x 100)\n";
  return out.str();
}

std::vector<nlohmann::json> GridResult::records() const {
  std::vector<nlohmann::json> lines;
  for (const auto& c : cells) {
    lines.push_back({{"src", c.direction.src},
                     {"tgt", c.direction.tgt},
                     {"count", c.count},
                     {"r1", c.mean.r1.f1},
                     {"r2", c.mean.r2.f1},
                     {"rl", c.mean.rl.f1},
                     {"r1_prf", score_json(c.mean.r1)},
                     {"r2_prf", score_json(c.mean.r2)},
                     {"rl_prf", score_json(c.mean.rl)}});
  }
  return lines;
}

GridResult eval_grid(const std::vector<data::Sample>& test, const std::vector<data::Direction>& directions,
                     const Summarizer& summarize, std::size_t reserved_ids) {
  if (directions.empty()) throw ConfigError("eval_grid: no directions");
  GridResult result;
  std::map<std::string, std::vector<RougeReport>> rows;
  for (const auto& dir : directions) {
    GridCell cell;
    cell.direction = dir;
    std::vector<RougeReport> reports;
    for (const auto& s : test) {
      if (s.lang != dir.tgt) continue;
      if (!dir.monolingual() && s.aligned.count(dir.src) == 0) {
        throw DataError("eval_grid: sample " + s.id + " has no aligned '" + dir.src + "' document for " + dir.to_string());
      }
      const auto candidate = summarize(s, dir);
      const auto reference = content_tokens(s.summary, reserved_ids);
      reports.push_back(rouge(candidate, reference));
    }
    if (reports.empty()) throw DataError("eval_grid: no test samples for direction " + dir.to_string());
    cell.count = reports.size();
    cell.mean = mean_report(reports);
    rows[dir.src].push_back(cell.mean);
    result.cells.push_back(cell);
  }
  for (const auto& [src, cells] : rows) result.row_average[src] = mean_report(cells);
  return result;
}

Summarizer model_summarizer(const Model<float>& model, const data::Vocab& vocab, const data::VisionStore& vision,
                            const BeamConfig& beam) {
  return [&model, &vocab, &vision, beam](const data::Sample& s, const data::Direction& dir) {
    const data::Batch b = data::make_batch({&s}, dir, vocab, vision, model.config());
    const Hypothesis h = beam.beam_size == 1
                             ? greedy_decode(model, b.src, b.vision, beam.max_len, beam.eos, vocab.reserved())
                             : beam_search(model, b.src, b.vision, beam, vocab.reserved());
    return content_tokens(h.tokens, vocab.reserved());
  };
}

}  // namespace m3s::eval
