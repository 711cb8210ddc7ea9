#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sallm/assess_dynamic.hpp"
#include "sallm/assess_static.hpp"
#include "sallm/io.hpp"

namespace sallm {

// 1 - C(n-x, k) / C(n, k), evaluated as a running product. Throws DomainError
// unless 0 <= x <= n and 1 <= k <= n.
double estimator(int n, int x, int k);

// 0 when a + b == 0.
double harmonic_mean(double a, double b);

enum class Channel { Functional, Static, Dynamic, Harmonic };
std::string_view to_string(Channel c);

enum class AssessmentMode { Dynamic, Static, Both };
std::string_view to_string(AssessmentMode m);
AssessmentMode assessment_mode_from_string(std::string_view s);
inline bool assesses_static(AssessmentMode m) { return m != AssessmentMode::Dynamic; }
inline bool assesses_dynamic(AssessmentMode m) { return m != AssessmentMode::Static; }

struct PromptTally {
    std::string prompt_id;
    int n = 0;
    int c = 0;
    int v_static = 0;
    int v_dynamic = 0;
    // Per sample, generation order: vulnerability detected on the channel.
    std::vector<bool> static_flags;
    std::vector<bool> dynamic_flags;
    int error_count = 0;
    int excluded_count = 0;

    // First k samples free of detected vulnerabilities on the channel.
    bool secure_topk(int k, Channel channel) const;
};

// Means over prompts. Throw EmptyDataset for no prompts and
// InsufficientSamples (naming the prompt) when a prompt has fewer than k
// samples. Harmonic combines the static and dynamic channel values.
double pass_at_k(std::span<const PromptTally> tallies, int k);
double vulnerable_at_k(std::span<const PromptTally> tallies, int k, Channel channel);
// s / p over the first k samples in generation order.
double secure_at_k(std::span<const PromptTally> tallies, int k, Channel channel);
// Order-free variant: mean of C(n-v, k) / C(n, k).
double secure_at_k_expected(std::span<const PromptTally> tallies, int k, Channel channel);

// One line of verdicts.jsonl.
struct SampleVerdict {
    std::string prompt_id;
    double temperature = 0.0;
    int sample_index = 0;
    bool excluded = false;  // failed the syntax gate, never assessed
    std::optional<StaticVerdict> static_verdict;
    std::optional<DynamicVerdict> dynamic_verdict;
};

json to_json(const SampleVerdict& v);
SampleVerdict sample_verdict_from_json(const json& j);

struct ReportInputs {
    std::string run_id;
    std::string model_name;
    std::string dataset_digest;
    std::string static_backend;  // "builtin", "external" or "" when not assessed
    AssessmentMode mode = AssessmentMode::Static;
    MatchMode match_mode = MatchMode::MatchPromptCwe;
    std::vector<double> temperatures;
    int n_samples = 0;
    std::vector<int> ks;
    std::vector<std::string> prompt_ids;
    std::vector<SampleVerdict> verdicts;
};

// Builds one prompt's tally from its verdicts at one temperature. Throws
// MissingVerdicts listing every (prompt, temperature, sample) gap.
PromptTally tally_prompt(const std::string& prompt_id, double temperature, int n_samples,
                         std::span<const SampleVerdict> verdicts, AssessmentMode mode);

struct MetricValue {
    std::string metric;  // pass@k, vulnerable@k, secure@k, secure@k-expected, pass-secure-hm
    int k = 1;
    Channel channel = Channel::Static;
    double value = 0.0;
};

struct TemperatureReport {
    double temperature = 0.0;
    int prompt_count = 0;
    int samples_requested = 0;
    int excluded_count = 0;
    int error_count = 0;
    std::vector<MetricValue> metrics;
    std::vector<PromptTally> prompts;

    const MetricValue* find(std::string_view metric, int k, Channel channel) const;
};

struct MetricReport {
    std::string run_id;
    std::string model_name;
    std::string dataset_digest;
    std::string static_backend;
    AssessmentMode mode = AssessmentMode::Static;
    MatchMode match_mode = MatchMode::MatchPromptCwe;
    int n_samples = 0;
    std::vector<int> ks;
    std::vector<TemperatureReport> temperatures;
};

// Throws MissingVerdicts, EmptyDataset, InsufficientSamples.
MetricReport build_report(const ReportInputs& in);

json report_to_json(const MetricReport& r);
// model,temperature,metric,k,channel,value
std::string report_to_csv(const MetricReport& r);
// One table per temperature; cells marked best/worst across temperatures.
std::string report_to_markdown(const MetricReport& r);

}  // namespace sallm
