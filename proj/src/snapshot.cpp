#include "kfp/snapshot.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kfp {

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string expect_key(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("snapshot: missing '" + key + "' line");
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key) throw std::runtime_error("snapshot: expected '" + key + "', found '" + k + "'");
  std::string rest;
  std::getline(ls, rest);
  return rest;
}

int parse_int(const std::string& text, const std::string& key) {
  std::istringstream s(text);
  int v = 0;
  if (!(s >> v)) throw std::runtime_error("snapshot: bad integer for '" + key + "'");
  return v;
}

}  // namespace

void write_snapshot(std::ostream& out, const PhaseField& f) {
  const Discretization& disc = f.disc();
  const DomainSpec& dom = disc.domain();
  const PhaseField c = f.to_coefficient();
  out << "KFPSNAP 1\n";
  out << "kind " << (dom.kind == DomainKind::Torus ? "torus" : "interval") << "\n";
  out << "d_x " << dom.d_x << "\n";
  out << "d_v " << disc.d_v() << "\n";
  out << "N " << disc.cutoff() << "\n";
  out << "n_x " << dom.n_x << "\n";
  out << "extents";
  for (double e : dom.extents) out << ' ' << format_double(e);
  out << "\n";
  out << "representation coefficient\n";
  out << "data " << c.data().size() << "\n";
  for (Eigen::Index i = 0; i < c.data().size(); ++i) out << format_double(c.data()[i]) << "\n";
}

void write_snapshot(const std::string& path, const PhaseField& f) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path + " for writing");
  write_snapshot(out, f);
}

PhaseField read_snapshot(std::istream& in, SnapshotHeader* header) {
  std::string magic;
  std::getline(in, magic);
  if (magic != "KFPSNAP 1") throw std::runtime_error("snapshot: bad magic line");
  SnapshotHeader h;
  std::istringstream kind(expect_key(in, "kind"));
  std::string k;
  kind >> k;
  if (k == "torus") {
    h.kind = DomainKind::Torus;
  } else if (k == "interval") {
    h.kind = DomainKind::Interval;
  } else {
    throw std::runtime_error("snapshot: unknown kind " + k);
  }
  h.d_x = parse_int(expect_key(in, "d_x"), "d_x");
  h.d_v = parse_int(expect_key(in, "d_v"), "d_v");
  h.cutoff = parse_int(expect_key(in, "N"), "N");
  h.n_x = parse_int(expect_key(in, "n_x"), "n_x");
  std::istringstream ext(expect_key(in, "extents"));
  double e = 0.0;
  while (ext >> e) h.extents.push_back(e);
  std::istringstream rep(expect_key(in, "representation"));
  rep >> k;
  if (k != "coefficient") throw std::runtime_error("snapshot: unsupported representation " + k);
  const int count = parse_int(expect_key(in, "data"), "data");

  DomainSpec dom;
  dom.kind = h.kind;
  dom.d_x = h.d_x;
  dom.extents = h.extents;
  dom.n_x = h.n_x;
  auto disc = Discretization::make(dom, h.d_v, h.cutoff);
  if (disc->cutoff() != h.cutoff || disc->size() != count) throw std::runtime_error("snapshot: data count does not match header");
  Eigen::VectorXd data(count);
  for (int i = 0; i < count; ++i) {
    if (!(in >> data[i])) throw std::runtime_error("snapshot: truncated data block");
  }
  if (header) *header = h;
  return PhaseField(disc, Representation::Coefficient, std::move(data));
}

PhaseField read_snapshot(const std::string& path, SnapshotHeader* header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("snapshot: cannot open " + path);
  return read_snapshot(in, header);
}

}  // namespace kfp
