#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "dualformer/errors.hpp"

namespace dualformer {

enum class CostKind { attention, projection, mlp, conv, embed, head };

inline constexpr CostKind kAllCostKinds[] = {CostKind::attention, CostKind::projection,
                                             CostKind::mlp,       CostKind::conv,
                                             CostKind::embed,     CostKind::head};

inline std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::attention: return "attention";
    case CostKind::projection: return "projection";
    case CostKind::mlp: return "mlp";
    case CostKind::conv: return "conv";
    case CostKind::embed: return "embed";
    case CostKind::head: return "head";
  }
  return "unknown";
}

/// One itemized line of a cost report. `elementwise` counts the outputs of
/// non-MAC operations (softmax, layer norm, GELU, residual adds, pooling).
struct CostTerm {
  std::string label;
  CostKind kind = CostKind::attention;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  std::uint64_t elementwise = 0;

  friend bool operator==(const CostTerm&, const CostTerm&) = default;
};

/// Per-invocation accumulator for multiply-accumulates executed by kernels.
///
/// Kernels charge the currently open scope; scopes nest and restore the
/// enclosing label on exit. Terms keep first-seen order.
class MacCounter {
 public:
  class Scope {
   public:
    Scope(MacCounter* counter, std::string label, CostKind kind) : counter_(counter) {
      if (counter_ != nullptr) {
        saved_ = std::exchange(counter_->current_, counter_->find_or_add(std::move(label), kind));
      }
    }
    ~Scope() {
      if (counter_ != nullptr) counter_->current_ = saved_;
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    MacCounter* counter_;
    std::size_t saved_ = kNone;
  };

  void add_macs(std::uint64_t n) { current_term().macs += n; }
  void add_elementwise(std::uint64_t n) { current_term().elementwise += n; }

  const std::vector<CostTerm>& terms() const { return terms_; }

  /// Folds another counter's terms into this one, matching by label.
  void merge(const MacCounter& other) {
    for (const CostTerm& t : other.terms_) {
      CostTerm& dst = terms_[find_or_add(t.label, t.kind)];
      dst.macs += t.macs;
      dst.elementwise += t.elementwise;
    }
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  CostTerm& current_term() {
    if (current_ == kNone) current_ = find_or_add("unscoped", CostKind::attention);
    return terms_[current_];
  }

  std::size_t find_or_add(std::string label, CostKind kind) {
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (terms_[i].label == label) return i;
    }
    terms_.push_back({std::move(label), kind, 0, 0, 0});
    return terms_.size() - 1;
  }

  std::vector<CostTerm> terms_;
  std::size_t current_ = kNone;
};

/// Execution options threaded through every kernel. `prefix` names the
/// enclosing layer; scopes opened through the context are labelled
/// `prefix.suffix`.
struct ExecContext {
  MacCounter* counter = nullptr;
  unsigned threads = 1;
  std::string prefix;

  ExecContext nested(std::string_view name) const {
    ExecContext child = *this;
    child.prefix = qualified(name);
    return child;
  }

  std::string qualified(std::string_view name) const {
    if (prefix.empty()) return std::string(name);
    if (name.empty()) return prefix;
    return prefix + "." + std::string(name);
  }

  void count_macs(std::uint64_t n) const {
    if (counter != nullptr) counter->add_macs(n);
  }
  void count_elementwise(std::uint64_t n) const {
    if (counter != nullptr) counter->add_elementwise(n);
  }
  /// Opens the scope `prefix.suffix` (or just `prefix` for an empty suffix).
  MacCounter::Scope scope(std::string_view suffix, CostKind kind) const {
    return MacCounter::Scope(counter, qualified(suffix), kind);
  }
};

/// Thread count from DFK_THREADS, falling back to 1.
inline unsigned threads_from_env() {
  if (const char* env = std::getenv("DFK_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<unsigned>(n);
  }
  return 1;
}

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results are identical to the sequential loop as long as iterations
/// write disjoint outputs.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        const std::size_t end = std::min(n, (w + 1) * chunk);
        for (std::size_t i = w * chunk; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// parallel_for whose body receives its own single-threaded context. When
/// counting, each index gets a private counter; they are merged in index
/// order afterwards so totals do not depend on the thread count.
template <class Body>
void parallel_for_counted(std::size_t n, const ExecContext& ctx, Body&& body) {
  if (ctx.counter == nullptr) {
    ExecContext local = ctx;
    local.threads = 1;
    parallel_for(n, ctx.threads, [&](std::size_t i) { body(i, static_cast<const ExecContext&>(local)); });
    return;
  }
  std::vector<MacCounter> counters(n);
  parallel_for(n, ctx.threads, [&](std::size_t i) {
    ExecContext local = ctx;
    local.threads = 1;
    local.counter = &counters[i];
    body(i, static_cast<const ExecContext&>(local));
  });
  for (const MacCounter& c : counters) ctx.counter->merge(c);
}

}  // namespace dualformer
