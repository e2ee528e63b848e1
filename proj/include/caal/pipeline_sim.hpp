#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace caal {

enum class ServiceDistribution { Exponential, Deterministic };

/// Ingest pipeline: web server -> processing queue -> processing workers, with
/// a parallel storage queue served by storage workers.
struct PipelineConfig {
    int n_users = 100;
    double submission_interval_s = 900;  // one upload per user every 15 minutes on average
    double webserver_service_ms = 5;     // 0 removes the stage
    double processing_service_ms = 3600;
    double storage_service_ms = 1500;
    int n_processing_workers = 2;
    int n_storage_workers = 1;
    bool storage_priority_lower = true;
    double sim_duration_s = 2 * 86400.0;
    double warmup_s = 3600;
    ServiceDistribution service_distribution = ServiceDistribution::Exponential;

    double arrival_rate_per_s() const { return n_users / submission_interval_s; }
    /// Offered load per processing worker.
    double processing_utilization() const;
    void validate() const;
};

struct StageStats {
    double mean_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    std::size_t samples = 0;
};

struct LatencyReport {
    int n_users = 0;
    StageStats webserver;         // time spent in the web-server stage
    StageStats processing_queue;  // wait before a processing worker picks the job up
    StageStats processing;        // processing service time
    StageStats storage_queue;     // wait before a storage worker picks the job up
    double end_to_end_mean_ms = 0;
    double offered_utilization = 0;
    bool saturated = false;
    long long arrivals = 0;
    long long departures = 0;
    long long in_system = 0;
};

LatencyReport simulate(const PipelineConfig& cfg, std::uint64_t seed);

struct LatencyCurve {
    std::vector<LatencyReport> points;
    /// First user count whose mean processing-queue wait exceeds the mean processing time.
    std::optional<int> knee_users;
};

/// One report per count, all with the same seed. Counts must be ascending.
LatencyCurve latency_sweep(const PipelineConfig& cfg, std::span<const int> user_counts, std::uint64_t seed);

/// CSV: users,webserver_ms,proc_queue_ms,proc_ms,storage_queue_ms,end_to_end_ms,saturated.
void write_sweep_csv(std::ostream& out, const LatencyCurve& curve);

}  // namespace caal
