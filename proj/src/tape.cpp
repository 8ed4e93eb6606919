#include "moce/ad/tape.hpp"

#include <limits>
#include <stdexcept>

namespace moce::ad {

namespace {
thread_local Tape* g_active = nullptr;
}

std::int32_t Tape::leaf() {
  nodes_.push_back({-1, -1, 0.0, 0.0});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::int32_t Tape::unary(std::int32_t a, double da) {
  nodes_.push_back({a, -1, da, 0.0});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::int32_t Tape::binary(std::int32_t a, double da, std::int32_t b, double db) {
  nodes_.push_back({a, b, da, db});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::vector<double> Tape::adjoints(std::int32_t output) const {
  std::vector<double> adj;
  adjoints_into(output, adj);
  return adj;
}

void Tape::adjoints_into(std::int32_t output, std::vector<double>& adj) const {
  if (output < 0 || static_cast<std::size_t>(output) >= nodes_.size()) {
    throw std::out_of_range("ad::Tape: output node is not on this tape");
  }
  adj.assign(nodes_.size(), 0.0);
  adj[output] = 1.0;
  for (std::int32_t i = output; i >= 0; --i) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) adj[n.a] += g * n.da;
    if (n.b >= 0) adj[n.b] += g * n.db;
  }
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }

TapeScope::~TapeScope() { g_active = previous_; }

}  // namespace moce::ad
