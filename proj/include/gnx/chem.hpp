#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/tokenizer.hpp>

#include "gnx/graph.hpp"

namespace gnx::chem {

/// Malformed SMILES; `offset` is the byte position of the offending token.
struct SmilesError : DataError {
  SmilesError(std::size_t off, const std::string& msg)
      : DataError("SMILES error at offset " + std::to_string(off) + ": " + msg), offset(off) {}
  std::size_t offset;
};

enum class BondOrder { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;  // capitalized symbol, e.g. "C", "Cl"
  bool aromatic = false;
  int charge = 0;
  std::optional<int> explicit_h;  // bracket atoms only
  bool bracket = false;
};

struct Bond {
  std::size_t a = 0, b = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;
  bool conjugated = false;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<int> implicit_h;  // filled by assign_implicit_hydrogens
  std::vector<std::string> warnings;

  std::size_t other_end(std::size_t bond, std::size_t atom) const {
    return bonds[bond].a == atom ? bonds[bond].b : bonds[bond].a;
  }
  std::vector<std::vector<std::size_t>> incident_bonds() const {
    std::vector<std::vector<std::size_t>> inc(atoms.size());
    for (std::size_t k = 0; k < bonds.size(); ++k) {
      inc[bonds[k].a].push_back(k);
      inc[bonds[k].b].push_back(k);
    }
    return inc;
  }
};

namespace detail {

inline bool is_known_element(std::string_view s) {
  static constexpr std::array<std::string_view, 62> table{
      "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
      "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
      "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
      "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Gd"};
  return std::find(table.begin(), table.end(), s) != table.end();
}

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : s_(text) {}

  Molecule run() {
    while (pos_ < s_.size()) step();
    if (!branches_.empty()) throw SmilesError(branches_.back().second, "unbalanced parentheses: '(' never closed");
    if (!rings_.empty()) {
      const auto& [label, open] = *rings_.begin();
      throw SmilesError(open.offset, "unmatched ring closure " + std::to_string(label));
    }
    if (pending_) throw SmilesError(pending_offset_, "bond symbol without a following atom");
    return std::move(mol_);
  }

 private:
  struct RingOpen {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t offset;
  };

  void step() {
    const std::size_t at = pos_;
    const char c = s_[pos_];
    switch (c) {
      case '(':
        if (!prev_) throw SmilesError(at, "branch opened before any atom");
        branches_.emplace_back(*prev_, at);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) throw SmilesError(at, "unbalanced parentheses: unexpected ')'");
        if (pending_) throw SmilesError(pending_offset_, "bond symbol without a following atom");
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '-': set_bond(BondOrder::Single, at); return;
      case '=': set_bond(BondOrder::Double, at); return;
      case '#': set_bond(BondOrder::Triple, at); return;
      case ':': set_bond(BondOrder::Aromatic, at); return;
      case '/':
      case '\\':
        warn("directional bond at offset " + std::to_string(at) + " ignored");
        set_bond(BondOrder::Single, at);
        return;
      case '.':
        if (pending_) throw SmilesError(at, "bond symbol before '.'");
        prev_.reset();
        ++pos_;
        return;
      case '%': {
        if (pos_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(s_[pos_ + 2])))
          throw SmilesError(at, "'%' needs two digits");
        const int label = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
        pos_ += 3;
        ring_bond(label, at);
        return;
      }
      case '[': bracket_atom(); return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      ring_bond(c - '0', at);
      return;
    }
    organic_atom();
  }

  void set_bond(BondOrder o, std::size_t at) {
    if (pending_) throw SmilesError(at, "two consecutive bond symbols");
    if (!prev_) throw SmilesError(at, "bond symbol before any atom");
    pending_ = o;
    pending_offset_ = at;
    ++pos_;
  }

  void warn(std::string w) { mol_.warnings.push_back(std::move(w)); }

  BondOrder implicit_order(std::size_t a, std::size_t b) const {
    return mol_.atoms[a].aromatic && mol_.atoms[b].aromatic ? BondOrder::Aromatic : BondOrder::Single;
  }

  void add_bond(std::size_t a, std::size_t b, BondOrder o, std::size_t at) {
    if (a == b) throw SmilesError(at, "atom bonded to itself");
    for (const Bond& e : mol_.bonds)
      if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) throw SmilesError(at, "duplicate bond");
    if (o == BondOrder::Aromatic && !(mol_.atoms[a].aromatic && mol_.atoms[b].aromatic))
      throw SmilesError(at, "aromatic bond between non-aromatic atoms");
    mol_.bonds.push_back({a, b, o});
  }

  void ring_bond(int label, std::size_t at) {
    if (!prev_) throw SmilesError(at, "ring closure before any atom");
    auto it = rings_.find(label);
    if (it == rings_.end()) {
      rings_[label] = {*prev_, pending_, at};
      pending_.reset();
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.order && pending_ && *open.order != *pending_) throw SmilesError(at, "conflicting ring-closure bond symbols");
    const BondOrder o = pending_ ? *pending_ : open.order ? *open.order : implicit_order(open.atom, *prev_);
    pending_.reset();
    add_bond(open.atom, *prev_, o, at);
  }

  void attach(Atom a, std::size_t at) {
    mol_.atoms.push_back(std::move(a));
    const std::size_t id = mol_.atoms.size() - 1;
    if (prev_) add_bond(*prev_, id, pending_ ? *pending_ : implicit_order(*prev_, id), pending_ ? pending_offset_ : at);
    else if (pending_) throw SmilesError(pending_offset_, "bond symbol without a preceding atom");
    pending_.reset();
    prev_ = id;
  }

  void organic_atom() {
    const std::size_t at = pos_;
    const char c = s_[pos_];
    Atom a;
    auto next_is = [&](char n) { return pos_ + 1 < s_.size() && s_[pos_ + 1] == n; };
    if (c == 'C' && next_is('l')) {
      a.element = "Cl";
      pos_ += 2;
    } else if (c == 'B' && next_is('r')) {
      a.element = "Br";
      pos_ += 2;
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      a.element = std::string(1, c);
      ++pos_;
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      a.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      a.aromatic = true;
      ++pos_;
    } else {
      throw SmilesError(at, std::string("unknown token '") + c + "'");
    }
    attach(std::move(a), at);
  }

  void bracket_atom() {
    const std::size_t at = pos_;
    ++pos_;
    auto peek = [&]() -> char { return pos_ < s_.size() ? s_[pos_] : '\0'; };
    auto digits = [&]() {
      int v = 0;
      bool any = false;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + (peek() - '0');
        ++pos_;
        any = true;
      }
      return any ? std::optional<int>(v) : std::nullopt;
    };
    if (digits()) warn("isotope label at offset " + std::to_string(at) + " ignored");
    Atom a;
    a.bracket = true;
    const char c = peek();
    if (std::islower(static_cast<unsigned char>(c))) {
      const std::string_view rest = s_.substr(pos_);
      if (rest.starts_with("se") || rest.starts_with("as")) {
        a.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(rest[0])))) + rest[1];
        pos_ += 2;
      } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
        a.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        ++pos_;
      } else {
        throw SmilesError(pos_, std::string("unknown aromatic symbol '") + c + "'");
      }
      a.aromatic = true;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      std::string sym(1, c);
      if (std::islower(static_cast<unsigned char>(s_.size() > pos_ + 1 ? s_[pos_ + 1] : '\0')) &&
          is_known_element(std::string{c, s_[pos_ + 1]})) {
        sym.push_back(s_[pos_ + 1]);
      }
      if (!is_known_element(sym)) throw SmilesError(pos_, "unknown element '" + sym + "'");
      a.element = sym;
      pos_ += sym.size();
    } else {
      throw SmilesError(pos_, "bracket atom without element symbol");
    }
    if (peek() == '@') {
      while (peek() == '@') ++pos_;
      warn("chirality at offset " + std::to_string(at) + " ignored");
    }
    if (peek() == 'H') {
      ++pos_;
      a.explicit_h = digits().value_or(1);
    } else {
      a.explicit_h = 0;
    }
    if (peek() == '+' || peek() == '-') {
      const char sign = peek();
      int magnitude = 0;
      while (peek() == sign) {
        ++magnitude;
        ++pos_;
      }
      if (magnitude == 1)
        if (auto d = digits()) magnitude = *d;
      a.charge = sign == '+' ? magnitude : -magnitude;
    }
    if (peek() == ':') {
      ++pos_;
      if (!digits()) throw SmilesError(pos_, "atom class needs digits");
    }
    if (peek() != ']') throw SmilesError(pos_, "expected ']' to close bracket atom");
    ++pos_;
    attach(std::move(a), at);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  Molecule mol_;
  std::optional<std::size_t> prev_;
  std::optional<BondOrder> pending_;
  std::size_t pending_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, offset of '(')
  std::map<int, RingOpen> rings_;
};

}  // namespace detail

/// Parses the supported SMILES subset into atoms and bonds. Perception passes
/// (rings, hydrogens, conjugation) are separate; see `prepare`.
inline Molecule parse_smiles(std::string_view text) {
  if (text.empty()) throw SmilesError(0, "empty SMILES");
  return detail::SmilesParser(text).run();
}

/// Marks every bond that lies on a cycle (i.e. is not a bridge). Aromatic
/// bonds that end up outside any ring, like the link in biphenyl written
/// without '-', become single bonds.
inline Molecule perceive_rings(Molecule mol) {
  const std::size_t n = mol.atoms.size();
  const auto inc = mol.incident_bonds();
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  for (Bond& b : mol.bonds) b.in_ring = true;
  // Iterative Tarjan bridge search; a frame is (atom, bond used to enter, next incident index).
  struct Frame {
    std::size_t atom, via, next;
  };
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  for (std::size_t root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{root, none, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < inc[f.atom].size()) {
        const std::size_t bond = inc[f.atom][f.next++];
        if (bond == f.via) continue;
        const std::size_t to = mol.other_end(bond, f.atom);
        if (disc[to] < 0) {
          disc[to] = low[to] = timer++;
          stack.push_back({to, bond, 0});
        } else {
          low[f.atom] = std::min(low[f.atom], disc[to]);
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          const std::size_t parent = stack.back().atom;
          low[parent] = std::min(low[parent], low[done.atom]);
          if (low[done.atom] > disc[parent]) mol.bonds[done.via].in_ring = false;
        }
      }
    }
  }
  for (Bond& b : mol.bonds)
    if (b.order == BondOrder::Aromatic && !b.in_ring) b.order = BondOrder::Single;
  return mol;
}

/// Default valence used for implicit hydrogens of organic-subset atoms.
inline int default_valence(const std::string& element) {
  static const std::map<std::string, int> table{{"B", 3}, {"C", 4}, {"N", 3},  {"O", 2},  {"P", 3},
                                                {"S", 2}, {"F", 1}, {"Cl", 1}, {"Br", 1}, {"I", 1}};
  const auto it = table.find(element);
  return it == table.end() ? 0 : it->second;
}

inline double bond_valence(BondOrder o) { return o == BondOrder::Aromatic ? 1.5 : static_cast<double>(o); }

/// Hydrogen counts: bracket atoms use their written count; other atoms get
/// default valence minus the (floored) sum of bond orders, clamped at zero.
inline Molecule assign_implicit_hydrogens(Molecule mol) {
  const auto inc = mol.incident_bonds();
  mol.implicit_h.assign(mol.atoms.size(), 0);
  for (std::size_t i = 0; i < mol.atoms.size(); ++i) {
    const Atom& a = mol.atoms[i];
    if (a.bracket) {
      mol.implicit_h[i] = a.explicit_h.value_or(0);
      continue;
    }
    double used = 0.0;
    for (std::size_t k : inc[i]) used += bond_valence(mol.bonds[k].order);
    const int h = default_valence(a.element) - static_cast<int>(std::floor(used)) - std::abs(a.charge);
    if (h < 0) mol.warnings.push_back("atom " + std::to_string(i) + " (" + a.element + ") exceeds its default valence");
    mol.implicit_h[i] = std::max(h, 0);
  }
  return mol;
}

/// Aromatic bonds are conjugated. A single bond is conjugated when both of its
/// atoms carry a multiple or aromatic bond; a multiple bond is conjugated when
/// it touches another multiple/aromatic bond or a conjugated single bond.
inline Molecule detect_conjugation(Molecule mol) {
  const auto inc = mol.incident_bonds();
  auto unsaturated = [&](std::size_t k) { return mol.bonds[k].order != BondOrder::Single; };
  auto atom_has_unsaturated = [&](std::size_t atom, std::size_t except) {
    return std::any_of(inc[atom].begin(), inc[atom].end(), [&](std::size_t k) { return k != except && unsaturated(k); });
  };
  for (std::size_t k = 0; k < mol.bonds.size(); ++k) {
    Bond& b = mol.bonds[k];
    if (b.order == BondOrder::Aromatic) b.conjugated = true;
    else if (b.order == BondOrder::Single) b.conjugated = atom_has_unsaturated(b.a, k) && atom_has_unsaturated(b.b, k);
  }
  for (std::size_t k = 0; k < mol.bonds.size(); ++k) {
    Bond& b = mol.bonds[k];
    if (b.order != BondOrder::Double && b.order != BondOrder::Triple) continue;
    for (std::size_t atom : {b.a, b.b})
      for (std::size_t j : inc[atom])
        if (j != k && (unsaturated(j) || mol.bonds[j].conjugated)) b.conjugated = true;
  }
  return mol;
}

/// parse -> rings -> hydrogens -> conjugation.
inline Molecule prepare(std::string_view smiles) {
  return detect_conjugation(assign_implicit_hydrogens(perceive_rings(parse_smiles(smiles))));
}

// --- featurization ----------------------------------------------------------

inline constexpr std::array<std::string_view, 10> kElements{"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
inline constexpr std::size_t kElementSlots = kElements.size() + 1;  // + other
inline constexpr std::size_t kDegreeSlots = 6;                      // 0..5
inline constexpr std::size_t kHydrogenSlots = 5;                    // 0..4
inline constexpr std::size_t kValenceSlots = 6;                     // 0..5
inline constexpr std::size_t kNodeDim = kElementSlots + kDegreeSlots + kHydrogenSlots + kValenceSlots;
inline constexpr std::size_t kEdgeDim = 6;  // single, double, triple, aromatic, conjugated, in_ring
inline constexpr std::size_t kGlobalDim = 1;

inline std::size_t element_slot(const std::string& e) {
  for (std::size_t i = 0; i < kElements.size(); ++i)
    if (kElements[i] == e) return i;
  return kElements.size();
}

/// Hydrogens not written in the input: the computed count for organic-subset
/// atoms, zero for bracket atoms.
inline int implicit_valence(const Molecule& m, std::size_t atom) {
  return m.atoms[atom].bracket ? 0 : m.implicit_h[atom];
}

/// Node features: one-hot element, degree, hydrogen count and implicit
/// valence; edge features: one-hot bond type, conjugated, in_ring. Each bond
/// becomes two directed edges. The global block is a single zero.
inline Graph featurize(const Molecule& m) {
  if (m.implicit_h.size() != m.atoms.size()) throw ConfigError("featurize needs hydrogens assigned (use prepare)");
  const auto inc = m.incident_bonds();
  Graph g;
  g.nodes = Tensor::matrix(m.atoms.size(), kNodeDim);
  auto clamp = [](std::size_t v, std::size_t slots) { return std::min(v, slots - 1); };
  for (std::size_t i = 0; i < m.atoms.size(); ++i) {
    std::size_t off = 0;
    g.nodes(i, off + element_slot(m.atoms[i].element)) = 1.0;
    off += kElementSlots;
    g.nodes(i, off + clamp(inc[i].size(), kDegreeSlots)) = 1.0;
    off += kDegreeSlots;
    g.nodes(i, off + clamp(static_cast<std::size_t>(m.implicit_h[i]), kHydrogenSlots)) = 1.0;
    off += kHydrogenSlots;
    g.nodes(i, off + clamp(static_cast<std::size_t>(implicit_valence(m, i)), kValenceSlots)) = 1.0;
  }
  g.edges = Tensor::matrix(2 * m.bonds.size(), kEdgeDim);
  for (std::size_t k = 0; k < m.bonds.size(); ++k) {
    const Bond& b = m.bonds[k];
    for (std::size_t dir = 0; dir < 2; ++dir) {
      const std::size_t row = 2 * k + dir;
      g.edges(row, static_cast<std::size_t>(b.order) - 1) = 1.0;
      g.edges(row, 4) = b.conjugated ? 1.0 : 0.0;
      g.edges(row, 5) = b.in_ring ? 1.0 : 0.0;
      g.senders.push_back(dir == 0 ? b.a : b.b);
      g.receivers.push_back(dir == 0 ? b.b : b.a);
    }
  }
  g.global = Tensor::matrix(1, kGlobalDim);
  return g;
}

inline Graph featurize_smiles(std::string_view smiles) { return featurize(prepare(smiles)); }

inline std::vector<std::string> node_feature_names() {
  std::vector<std::string> n;
  for (std::string_view e : kElements) n.push_back("elem_" + std::string(e));
  n.push_back("elem_other");
  for (std::size_t i = 0; i < kDegreeSlots; ++i) n.push_back("degree_" + std::to_string(i));
  for (std::size_t i = 0; i < kHydrogenSlots; ++i) n.push_back("h_" + std::to_string(i));
  for (std::size_t i = 0; i < kValenceSlots; ++i) n.push_back("implicit_valence_" + std::to_string(i));
  return n;
}

inline std::vector<std::string> edge_feature_names() {
  return {"single", "double", "triple", "aromatic", "conjugated", "in_ring"};
}

// --- ESOL -------------------------------------------------------------------

struct SolubilityRecord {
  std::string smiles;
  double log_solubility = 0.0;  // log mol/L
};

struct EsolData {
  std::vector<SolubilityRecord> records;
  std::size_t skipped = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  // No escape character: backslashes are legal SMILES bond symbols.
  const boost::escaped_list_separator<char> sep(std::string(), std::string(","), std::string("\""));
  boost::tokenizer<boost::escaped_list_separator<char>> tok(line, sep);
  std::vector<std::string> out(tok.begin(), tok.end());
  for (auto& f : out)
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
  return out;
}

inline constexpr const char* kEsolSmilesColumn = "smiles";
inline constexpr const char* kEsolTargetColumn = "measured log solubility in mols per litre";

/// Reads a CSV with a SMILES column and a measured log-solubility column.
/// Rows whose SMILES do not parse are counted and skipped.
inline EsolData load_esol(const std::string& path, const std::string& smiles_col = kEsolSmilesColumn,
                          const std::string& target_col = kEsolTargetColumn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  EsolData data;
  std::string line;
  if (!std::getline(in, line)) return data;
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sc = column(smiles_col), tc = column(target_col);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() <= std::max(sc, tc)) throw DataError(path + ":" + std::to_string(line_no) + ": too few fields");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(fields[tc], &used);
      if (used != fields[tc].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad solubility value '" + fields[tc] + "'");
    }
    try {
      prepare(fields[sc]);
    } catch (const SmilesError&) {
      ++data.skipped;
      continue;
    }
    data.records.push_back({fields[sc], value});
  }
  return data;
}

}  // namespace gnx::chem
