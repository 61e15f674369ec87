#include <algorithm>
#include <cmath>
#include <sstream>

#include "equacode/campaign.hpp"
#include "equacode/error.hpp"
#include "equacode/util.hpp"
#include "csv.hpp"

namespace equacode {

namespace {

std::string aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        line += row[c] + std::string(widths[c] - row[c].size(), ' ');
      } else {
        line += "  " + std::string(widths[c] - row[c].size(), ' ') + row[c];
      }
    }
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

Report build_report(const TranscriptStore& store, const CampaignPlan& plan, const ReportOptions& options) {
  if (store.records().empty()) throw StoreError("store " + store.path().string() + " holds no transcripts");

  Report report;
  report.plan_hash = plan.hash;
  report.generated_at = utc_timestamp();
  for (const auto& v : plan.variants) report.variants.push_back(v.display_name());
  for (const auto& t : plan.targets) report.targets.push_back(t.name);

  const auto latest = store.latest();
  std::vector<std::vector<std::size_t>> successes(plan.variants.size(),
                                                  std::vector<std::size_t>(plan.targets.size(), 0));
  std::vector<std::vector<std::string>> prompts(plan.variants.size());
  std::vector<std::vector<bool>> prompt_seen(plan.variants.size(), std::vector<bool>(plan.queries.size(), false));

  for (const auto& item : plan.items) {
    auto found = latest.find(item.key);
    if (found == latest.end() || !found->second.terminal()) {
      ++report.missing_items;
      continue;
    }
    const Transcript& t = found->second;
    if (t.status == TranscriptStatus::kFailed) {
      ++report.failed_items;
      continue;
    }
    if (t.verdict) {
      if (t.verdict->parse_failed) ++report.unparseable_verdicts;
      if (t.verdict->success) ++successes[item.variant_index][item.target_index];
    }
    if (!prompt_seen[item.variant_index][item.query_index]) {
      prompt_seen[item.variant_index][item.query_index] = true;
      prompts[item.variant_index].push_back(t.prompt.rendered);
    }
  }

  const std::size_t m = plan.queries.size();
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    std::vector<AsrResult> row;
    double sum = 0.0;
    for (std::size_t t = 0; t < plan.targets.size(); ++t) {
      row.push_back(compute_asr(successes[v][t], m));
      sum += row.back().percent();
    }
    report.averages.push_back(row.empty() ? 0.0 : sum / static_cast<double>(row.size()));
    report.asr.push_back(std::move(row));
  }

  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    auto ref = options.reference_averages.find(report.variants[v]);
    if (ref == options.reference_averages.end()) continue;
    if (std::fabs(report.averages[v] - ref->second) > 0.005) {
      report.footnotes.push_back(report.variants[v] + ": recomputed average " + format_percent(report.averages[v]) +
                                 " differs from the reference value " + format_percent(ref->second));
    }
  }
  if (report.missing_items > 0) {
    report.footnotes.push_back(std::to_string(report.missing_items) +
                               " planned items have no terminal record and count as failures");
  }
  if (report.failed_items > 0) {
    report.footnotes.push_back(std::to_string(report.failed_items) + " items failed and count as failures");
  }
  if (report.unparseable_verdicts > 0) {
    report.footnotes.push_back(std::to_string(report.unparseable_verdicts) +
                               " verdicts had no parseable rating and count as failures");
  }

  if (options.scorer) {
    std::vector<double> ppl;
    for (const auto& texts : prompts) {
      std::vector<PerplexityScore> scores;
      scores.reserve(texts.size());
      for (const auto& text : texts) scores.push_back(options.scorer->score(text));
      ppl.push_back(scores.empty() ? std::nan("") : mean_ppl(scores));
    }
    report.mean_ppl = std::move(ppl);
  }
  if (!options.bypass.empty()) report.bypass = options.bypass;
  return report;
}

Report build_report(const TranscriptStore& store, const ReportOptions& options) {
  return build_report(store, store.plan(), options);
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << "variant";
  for (const auto& t : targets) out << ',' << detail::csv_escape(t);
  out << ",average";
  if (mean_ppl) out << ",mean_ppl";
  out << '\n';
  for (std::size_t v = 0; v < variants.size(); ++v) {
    out << detail::csv_escape(variants[v]);
    for (const auto& cell : asr[v]) out << ',' << format_percent(cell.percent());
    out << ',' << format_percent(averages[v]);
    if (mean_ppl) out << ',' << format_fixed((*mean_ppl)[v], 2);
    out << '\n';
  }
  return out.str();
}

std::string Report::to_text() const {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Method"};
  for (const auto& t : targets) header.push_back(t);
  header.push_back("Average");
  if (mean_ppl) header.push_back("Mean PPL");
  rows.push_back(std::move(header));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<std::string> row{variants[v]};
    for (const auto& cell : asr[v]) row.push_back(format_percent(cell.percent()));
    std::string average = format_percent(averages[v]);
    for (const auto& note : footnotes) {
      if (note.rfind(variants[v] + ":", 0) == 0) {
        average += "*";
        break;
      }
    }
    row.push_back(std::move(average));
    if (mean_ppl) row.push_back(format_fixed((*mean_ppl)[v], 2));
    rows.push_back(std::move(row));
  }

  std::ostringstream out;
  out << "ASR (%)  plan " << plan_hash << "  generated " << generated_at << "\n\n";
  out << aligned(rows);
  if (bypass) {
    std::vector<std::vector<std::string>> table{{"Filter", "Passed", "Total", "Errors", "Bypass (%)"}};
    for (const auto& b : *bypass) {
      table.push_back({b.filter_id, std::to_string(b.passed), std::to_string(b.total), std::to_string(b.errors),
                       format_percent(b.bypass_rate * 100.0)});
    }
    out << '\n' << aligned(table);
  }
  if (!footnotes.empty()) {
    out << '\n';
    for (const auto& note : footnotes) out << "* " << note << '\n';
  }
  return out.str();
}

}  // namespace equacode
