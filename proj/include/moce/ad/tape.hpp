#pragma once

#include <cstdint>
#include <vector>

namespace moce::ad {

/// Wengert list for scalar reverse-mode differentiation.
///
/// Every node has at most two parents with their local partials. Leaves carry
/// no parents. A tape is bound to the calling thread through TapeScope; Var
/// arithmetic records onto the active tape.
class Tape {
 public:
  std::int32_t leaf();
  std::int32_t unary(std::int32_t a, double da);
  std::int32_t binary(std::int32_t a, double da, std::int32_t b, double db);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  /// Reverse sweep seeded with d(output)/d(output) = 1. Returns the adjoint
  /// of every node recorded so far.
  std::vector<double> adjoints(std::int32_t output) const;

  /// Same as adjoints() but reuses `adj` as scratch storage.
  void adjoints_into(std::int32_t output, std::vector<double>& adj) const;

 private:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };
  std::vector<Node> nodes_;
};

/// The tape Var operations record onto, or nullptr.
Tape* active_tape();

/// Binds a tape to the current thread for the lifetime of the scope; restores
/// the previously active tape (if any) on exit, so scopes nest.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace moce::ad
