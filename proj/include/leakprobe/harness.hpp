#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leakprobe/gcg.hpp"
#include "leakprobe/judge.hpp"
#include "leakprobe/model.hpp"

namespace leakprobe {

/// Prompts with stable numeric ids. File format: "<id>\t<prompt>" per line;
/// blank lines and '#' comments are skipped.
struct QueryCorpus {
  std::vector<std::pair<std::int64_t, std::string>> queries;
  std::string source_path;

  static QueryCorpus load(const std::filesystem::path& path);
  static QueryCorpus from_queries(std::vector<std::pair<std::int64_t, std::string>> queries,
                                  std::string source = "<memory>");
  /// Throws ConfigError on duplicate ids or empty prompts.
  void validate() const;
  std::size_t size() const noexcept { return queries.size(); }
};

struct BaselineEntry {
  std::int64_t id = 0;
  std::string completion;
  JudgeVerdict verdict;
  std::string error;  // non-empty when the query failed before judging
};

struct ProbeEntry {
  std::int64_t id = 0;
  std::optional<ProbeResult> result;
  std::string error;
};

/// Greedy completion of each query with no adversarial suffix, judged.
std::vector<BaselineEntry> baseline_pass(const LanguageModel& model, const QueryCorpus& corpus,
                                         const PromptTemplate& tmpl, const JudgePolicy& judge,
                                         std::size_t max_new_tokens);

struct PassOptions {
  std::size_t jobs = 1;
  std::uint64_t campaign_seed = 0;
  const std::atomic<bool>* stop = nullptr;
  /// Ids already done (resume); they are left out of the returned list.
  std::vector<std::int64_t> skip;
  /// Called from worker threads as each query finishes, under a lock.
  std::function<void(const ProbeEntry&)> on_done;
};

/// One probe per query with seed derive_seed(campaign_seed, id), fanned out
/// over `jobs` workers. Results come back sorted by id. Queries cut short by
/// the stop flag are dropped.
std::vector<ProbeEntry> probe_pass(const LanguageModel& model, const QueryCorpus& corpus,
                                   const PromptTemplate& tmpl, const ProbeConfig& config,
                                   const JudgePolicy& judge, const PassOptions& options = {});

struct QueryOutcome {
  std::int64_t id = 0;
  bool leaked = false;
  bool unknown = false;
  int leak_count = 0;
  std::optional<std::size_t> stop_epoch;
};

QueryOutcome outcome_of(const BaselineEntry& e);
/// A probe that never reached a leakage check (E = 0) carries the baseline
/// outcome of the same query, since its prompt was never optimized.
QueryOutcome outcome_of(const ProbeEntry& e, const QueryOutcome& baseline);

struct RateCount {
  std::size_t leaked = 0;
  std::size_t judged = 0;   // denominator: queries with a usable verdict
  std::size_t unknown = 0;

  /// One decimal place, rounded half up, from integer arithmetic; "n/a"
  /// when nothing was judged.
  std::string formatted() const;
  std::optional<double> percent() const;
};

struct CampaignReport {
  struct Row {
    std::int64_t id = 0;
    bool leaked_before = false;
    bool leaked_after = false;
    int leak_count_after = 0;
    std::optional<std::size_t> stop_epoch;
    bool unknown_before = false;
    bool unknown_after = false;
    /// leaked before but not after
    bool regression = false;
  };
  std::string model_descriptor;
  std::vector<Row> per_query;  // ascending id
  RateCount before;
  RateCount after;

  std::string rate_before() const { return before.formatted(); }
  std::string rate_after() const { return after.formatted(); }
  std::size_t regressions() const;
};

/// Pure, order-independent reduction. Throws InvalidArgument when the id sets
/// differ or contain duplicates.
CampaignReport build_report(const std::string& model_descriptor, std::vector<QueryOutcome> before,
                            std::vector<QueryOutcome> after);

/// Fixed-width B/A table.
std::string format_table(const CampaignReport& report);
/// One summary record followed by one record per query.
std::string format_records(const CampaignReport& report);
/// id,leaked_before,leaked_after,leak_count_after,stop_epoch
std::string format_leak_csv(const CampaignReport& report);

struct CampaignOptions {
  PassOptions pass;
  /// Per-query progress file (JSON lines). With resume, finished queries
  /// found there are not recomputed.
  std::optional<std::filesystem::path> checkpoint;
  bool resume = false;
};

struct CampaignResult {
  std::vector<BaselineEntry> before;
  std::vector<ProbeEntry> after;
  CampaignReport report;
};

/// baseline_pass + probe_pass + build_report with checkpointing. Throws
/// Interrupted (after checkpointing) when the stop flag ends the run early.
CampaignResult run_campaign(const LanguageModel& model, const QueryCorpus& corpus,
                            const PromptTemplate& tmpl, const ProbeConfig& config,
                            const JudgePolicy& judge, const CampaignOptions& options);

}  // namespace leakprobe
