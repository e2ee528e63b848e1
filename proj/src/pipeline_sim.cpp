#include "caal/pipeline_sim.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <queue>

#include "caal/csv.hpp"
#include "caal/errors.hpp"
#include "caal/rng.hpp"

namespace caal {

double PipelineConfig::processing_utilization() const {
    return arrival_rate_per_s() * (processing_service_ms / 1000.0) / n_processing_workers;
}

void PipelineConfig::validate() const {
    if (n_users < 1) throw ConfigError("pipeline.n_users must be >= 1");
    if (!(submission_interval_s > 0)) throw ConfigError("pipeline.submission_interval_s must be > 0");
    if (webserver_service_ms < 0) throw ConfigError("pipeline.webserver_service_ms must be >= 0");
    if (!(processing_service_ms > 0) || !(storage_service_ms > 0))
        throw ConfigError("pipeline service times must be positive");
    if (n_processing_workers < 1 || n_storage_workers < 1) throw ConfigError("pipeline worker counts must be >= 1");
    if (!(sim_duration_s > warmup_s) || warmup_s < 0) throw ConfigError("pipeline.sim_duration_s must exceed warmup_s");
}

namespace {

enum class EventKind { Arrival, WebDone, ProcDone, StoreDone };

struct Event {
    double time;
    std::uint64_t id;  // stable tie-break
    EventKind kind;
    std::size_t job;
};

struct Later {
    bool operator()(const Event& a, const Event& b) const {
        return a.time != b.time ? a.time > b.time : a.id > b.id;
    }
};

struct Job {
    double arrival = 0;
    double web_start = 0;
    double web_done = 0;
    double proc_start = 0;
    double proc_done = 0;
    double store_start = 0;
    bool measured = false;
};

StageStats summarize(std::vector<double>& xs) {
    StageStats s;
    s.samples = xs.size();
    if (xs.empty()) return s;
    double sum = 0;
    for (double x : xs) sum += x;
    s.mean_ms = sum / static_cast<double>(xs.size());
    auto pct = [&](double q) {
        auto k = static_cast<std::size_t>(q * static_cast<double>(xs.size() - 1));
        std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
        return xs[k];
    };
    s.p50_ms = pct(0.5);
    s.p95_ms = pct(0.95);
    return s;
}

class Simulator {
public:
    Simulator(const PipelineConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {}

    LatencyReport run() {
        const double rate = cfg_.arrival_rate_per_s();
        schedule(exp_draw(1.0 / rate), EventKind::Arrival, 0);

        while (!events_.empty()) {
            Event ev = events_.top();
            if (ev.time > cfg_.sim_duration_s) break;
            events_.pop();
            now_ = ev.time;
            switch (ev.kind) {
                case EventKind::Arrival: on_arrival(rate); break;
                case EventKind::WebDone: on_web_done(ev.job); break;
                case EventKind::ProcDone: on_proc_done(ev.job); break;
                case EventKind::StoreDone: on_store_done(); break;
            }
        }
        return report();
    }

private:
    double exp_draw(double mean) { return std::exponential_distribution<double>(1.0 / mean)(rng_); }

    double service(double mean_ms) {
        const double mean_s = mean_ms / 1000.0;
        return cfg_.service_distribution == ServiceDistribution::Deterministic ? mean_s : exp_draw(mean_s);
    }

    void schedule(double t, EventKind k, std::size_t job) { events_.push({t, next_id_++, k, job}); }

    void on_arrival(double rate) {
        const std::size_t j = jobs_.size();
        jobs_.push_back({});
        jobs_[j].arrival = now_;
        jobs_[j].measured = now_ >= cfg_.warmup_s;
        ++arrivals_;
        if (cfg_.webserver_service_ms > 0) {
            web_queue_.push_back(j);
            start_web();
        } else {
            jobs_[j].web_start = jobs_[j].web_done = now_;
            enqueue_downstream(j);
        }
        schedule(now_ + exp_draw(1.0 / rate), EventKind::Arrival, 0);
    }

    void start_web() {
        if (web_busy_ || web_queue_.empty()) return;
        const std::size_t j = web_queue_.front();
        web_queue_.pop_front();
        web_busy_ = true;
        jobs_[j].web_start = now_;
        // The web server is a fixed-cost stage.
        schedule(now_ + cfg_.webserver_service_ms / 1000.0, EventKind::WebDone, j);
    }

    void on_web_done(std::size_t j) {
        web_busy_ = false;
        jobs_[j].web_done = now_;
        enqueue_downstream(j);
        start_web();
    }

    void enqueue_downstream(std::size_t j) {
        proc_queue_.push_back(j);
        store_queue_.push_back(j);
        start_processing();
        start_storage();
    }

    void start_processing() {
        while (proc_busy_ < cfg_.n_processing_workers && !proc_queue_.empty()) {
            const std::size_t j = proc_queue_.front();
            proc_queue_.pop_front();
            ++proc_busy_;
            jobs_[j].proc_start = now_;
            schedule(now_ + service(cfg_.processing_service_ms), EventKind::ProcDone, j);
        }
    }

    void start_storage() {
        while (store_busy_ < cfg_.n_storage_workers && !store_queue_.empty()) {
            // Lower-priority storage work waits while processing work is queued.
            if (cfg_.storage_priority_lower && !proc_queue_.empty()) return;
            const std::size_t j = store_queue_.front();
            store_queue_.pop_front();
            ++store_busy_;
            jobs_[j].store_start = now_;
            if (jobs_[j].measured) store_wait_.push_back((now_ - jobs_[j].web_done) * 1000.0);
            schedule(now_ + service(cfg_.storage_service_ms), EventKind::StoreDone, j);
        }
    }

    void on_proc_done(std::size_t j) {
        --proc_busy_;
        ++departures_;
        Job& job = jobs_[j];
        job.proc_done = now_;
        if (job.measured) {
            web_.push_back((job.web_done - job.arrival) * 1000.0);
            proc_wait_.push_back((job.proc_start - job.web_done) * 1000.0);
            proc_.push_back((job.proc_done - job.proc_start) * 1000.0);
            e2e_.push_back((job.proc_done - job.arrival) * 1000.0);
        }
        start_processing();
        start_storage();
    }

    void on_store_done() {
        --store_busy_;
        start_storage();
    }

    LatencyReport report() {
        LatencyReport r;
        r.n_users = cfg_.n_users;
        r.webserver = summarize(web_);
        r.processing_queue = summarize(proc_wait_);
        r.processing = summarize(proc_);
        r.storage_queue = summarize(store_wait_);
        double sum = 0;
        for (double x : e2e_) sum += x;
        r.end_to_end_mean_ms = e2e_.empty() ? 0 : sum / static_cast<double>(e2e_.size());
        r.offered_utilization = cfg_.processing_utilization();
        r.saturated = r.offered_utilization >= 1.0;
        r.arrivals = arrivals_;
        r.departures = departures_;
        r.in_system = arrivals_ - departures_;
        return r;
    }

    const PipelineConfig& cfg_;
    Rng rng_;
    std::priority_queue<Event, std::vector<Event>, Later> events_;
    std::uint64_t next_id_ = 0;
    double now_ = 0;
    std::vector<Job> jobs_;
    std::deque<std::size_t> web_queue_, proc_queue_, store_queue_;
    bool web_busy_ = false;
    int proc_busy_ = 0, store_busy_ = 0;
    long long arrivals_ = 0, departures_ = 0;
    std::vector<double> web_, proc_wait_, proc_, store_wait_, e2e_;
};

}  // namespace

LatencyReport simulate(const PipelineConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    return Simulator(cfg, seed).run();
}

LatencyCurve latency_sweep(const PipelineConfig& cfg, std::span<const int> user_counts, std::uint64_t seed) {
    if (!std::is_sorted(user_counts.begin(), user_counts.end())) throw ConfigError("user counts must be ascending");
    LatencyCurve curve;
    for (int n : user_counts) {
        PipelineConfig c = cfg;
        c.n_users = n;
        auto rep = simulate(c, seed);
        if (!curve.knee_users && rep.processing_queue.mean_ms > rep.processing.mean_ms) curve.knee_users = n;
        curve.points.push_back(rep);
    }
    return curve;
}

void write_sweep_csv(std::ostream& out, const LatencyCurve& curve) {
    csv::Writer w(out);
    w.header({"users", "webserver_ms", "proc_queue_ms", "proc_ms", "storage_queue_ms", "end_to_end_ms", "saturated"});
    for (const auto& p : curve.points) {
        w.field(p.n_users).field(p.webserver.mean_ms).field(p.processing_queue.mean_ms).field(p.processing.mean_ms);
        w.field(p.storage_queue.mean_ms).field(p.end_to_end_mean_ms).field(p.saturated);
        w.end_row();
    }
}

}  // namespace caal
