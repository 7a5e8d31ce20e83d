#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace higraph::chem {

enum class BondOrder { Single, Double, Triple, Aromatic };

struct Atom {
  std::string element;
  bool aromatic = false;
  int formal_charge = 0;
  std::optional<int> explicit_h;  // bracket atoms only
  int implicit_h = 0;             // always 0 when explicit_h is present
  bool in_ring = false;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;
};

/// Connected molecular graph parsed from a SMILES string.
struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source;

  std::size_t other_end(std::size_t bond_idx, std::size_t atom) const {
    const Bond& b = bonds[bond_idx];
    return b.a == atom ? b.b : b.a;
  }
  /// Bond indices incident to each atom.
  std::vector<std::vector<std::size_t>> adjacency() const;
  int total_h(std::size_t atom) const {
    const Atom& a = atoms[atom];
    return a.explicit_h.value_or(0) + a.implicit_h;
  }
};

struct RingFlags {
  std::vector<bool> atom_in_ring;
  std::vector<bool> bond_in_ring;
};

/// Flags every bond that lies on some cycle (i.e. is not a bridge) and
/// every atom incident to such a bond. Idempotent.
RingFlags ring_membership(const Molecule& m);

/// Applies ring_membership flags in place.
void apply_ring_flags(Molecule& m);

double bond_order_value(BondOrder o);

}  // namespace higraph::chem
