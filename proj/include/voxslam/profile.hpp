#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace voxslam {

// Accumulates per-component wall times; reports medians (per-iteration
// framing). Safe to share between the tracker and mapper threads.
class Profiler {
  public:
    void add(const std::string& name, double ms) {
        std::lock_guard lock(mu_);
        samples_[name].push_back(ms);
    }

    double median(const std::string& name) const {
        std::lock_guard lock(mu_);
        auto it = samples_.find(name);
        if (it == samples_.end() || it->second.empty()) {
            return 0.0;
        }
        std::vector<double> v = it->second;
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    std::vector<std::string> names() const {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        for (const auto& [k, _] : samples_) {
            out.push_back(k);
        }
        return out;
    }

    class Scope {
      public:
        Scope(Profiler* p, std::string name)
            : p_(p), name_(std::move(name)), t0_(std::chrono::steady_clock::now()) {}
        ~Scope() {
            if (p_ != nullptr) {
                const auto dt = std::chrono::steady_clock::now() - t0_;
                p_->add(name_, std::chrono::duration<double, std::milli>(dt).count());
            }
        }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Profiler* p_;
        std::string name_;
        std::chrono::steady_clock::time_point t0_;
    };

    // p may be null; the scope is then a no-op.
    static Scope scope(Profiler* p, std::string name) { return Scope(p, std::move(name)); }

  private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<double>> samples_;
};

} // namespace voxslam
