#pragma once

// Text snapshot of a PhaseField.
//
//   KFPSNAP 1
//   kind torus|interval
//   d_x <int>
//   d_v <int>
//   N <int>
//   n_x <int>
//   extents <L_1> ... <L_dx>
//   representation coefficient
//   data <count>
//   <value>            one per line, %.17g, row-major over (x-node, alpha)
//
// Data is always stored as Hermite coefficients. A reader rebuilds the grid
// from the header alone; boundary data and potentials are not persisted.

#include "kfp/phase_field.hpp"

#include <iosfwd>
#include <string>

namespace kfp {

struct SnapshotHeader {
  DomainKind kind = DomainKind::Torus;
  int d_x = 1;
  int d_v = 1;
  int cutoff = 0;
  int n_x = 0;
  std::vector<double> extents;
};

void write_snapshot(std::ostream& out, const PhaseField& f);
void write_snapshot(const std::string& path, const PhaseField& f);

/// Throws std::runtime_error on malformed input.
PhaseField read_snapshot(std::istream& in, SnapshotHeader* header = nullptr);
PhaseField read_snapshot(const std::string& path, SnapshotHeader* header = nullptr);

}  // namespace kfp
