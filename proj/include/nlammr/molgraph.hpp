/*
 * Copyright 2026 The nlammr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Molecule graphs with categorical atom/bond features and the graph
// isomorphism network that turns each of them into one structure vector.

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nlammr/ehr.hpp"
#include "nlammr/errors.hpp"
#include "nlammr/nn.hpp"
#include "nlammr/tensor.hpp"

namespace nlammr {

inline constexpr std::size_t kAtomFeatures = 9;
inline constexpr std::size_t kBondFeatures = 3;

using AtomFeatures = std::array<int, kAtomFeatures>;
using BondFeatures = std::array<int, kBondFeatures>;

struct FeatureCardinalities {
  AtomFeatures atom{};
  BondFeatures bond{};

  bool operator==(const FeatureCardinalities&) const = default;
};

struct Bond {
  std::size_t i = 0;
  std::size_t j = 0;
  BondFeatures features{};

  bool operator==(const Bond&) const = default;
};

// Undirected molecular graph. Each bond is stored once.
struct MoleculeGraph {
  std::vector<AtomFeatures> atoms;
  std::vector<Bond> bonds;

  std::size_t num_atoms() const { return atoms.size(); }
  bool operator==(const MoleculeGraph&) const = default;

  void validate(const FeatureCardinalities& cards) const {
    if (atoms.empty()) throw ValidationError("molecule: no atoms");
    for (std::size_t a = 0; a < atoms.size(); ++a)
      for (std::size_t f = 0; f < kAtomFeatures; ++f)
        if (atoms[a][f] < 0 || atoms[a][f] >= cards.atom[f]) {
          throw ValidationError("molecule: atom " + std::to_string(a) + " feature " +
                                std::to_string(f) + " = " + std::to_string(atoms[a][f]) +
                                " outside [0, " + std::to_string(cards.atom[f]) + ")");
        }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& b : bonds) {
      if (b.i >= atoms.size() || b.j >= atoms.size()) {
        throw ValidationError("molecule: bond (" + std::to_string(b.i) + ", " + std::to_string(b.j) +
                              ") references a missing atom");
      }
      if (b.i == b.j) throw ValidationError("molecule: self-loop on atom " + std::to_string(b.i));
      if (!seen.insert(ordered_pair(b.i, b.j)).second) {
        throw ValidationError("molecule: duplicate bond (" + std::to_string(b.i) + ", " +
                              std::to_string(b.j) + ")");
      }
      for (std::size_t f = 0; f < kBondFeatures; ++f)
        if (b.features[f] < 0 || b.features[f] >= cards.bond[f]) {
          throw ValidationError("molecule: bond feature " + std::to_string(f) + " = " +
                                std::to_string(b.features[f]) + " outside [0, " +
                                std::to_string(cards.bond[f]) + ")");
        }
    }
  }

  // Same molecule with atom a moved to position perm[a].
  MoleculeGraph relabeled(const std::vector<std::size_t>& perm) const {
    MoleculeGraph g;
    g.atoms.resize(atoms.size());
    for (std::size_t a = 0; a < atoms.size(); ++a) g.atoms[perm[a]] = atoms[a];
    for (const auto& b : bonds) g.bonds.push_back({perm[b.i], perm[b.j], b.features});
    return g;
  }
};

// ---------------------------------------------------------------------------
// Molecule file:
// {"feature_cardinalities": {"atom": [9 ints], "bond": [3 ints]},
//  "molecules": {code: {"atoms": [[9 ints]...], "bonds": [[i, j, f1, f2, f3]...]}}}

inline MoleculeGraph parse_molecule(const ojson& j, const FeatureCardinalities& cards) {
  MoleculeGraph g;
  try {
    for (const auto& a : j.at("atoms")) {
      if (!a.is_array() || a.size() != kAtomFeatures) {
        throw ValidationError("molecule: atom must have " + std::to_string(kAtomFeatures) + " features");
      }
      AtomFeatures f{};
      for (std::size_t k = 0; k < kAtomFeatures; ++k) f[k] = a[k].get<int>();
      g.atoms.push_back(f);
    }
    if (j.contains("bonds")) {
      for (const auto& b : j.at("bonds")) {
        if (!b.is_array() || b.size() != 2 + kBondFeatures) {
          throw ValidationError("molecule: bond must be [i, j, f1, f2, f3]");
        }
        const long long bi = b[0].get<long long>(), bj = b[1].get<long long>();
        if (bi < 0 || bj < 0) throw ValidationError("molecule: negative atom index in bond");
        Bond bond{static_cast<std::size_t>(bi), static_cast<std::size_t>(bj), {}};
        for (std::size_t k = 0; k < kBondFeatures; ++k) bond.features[k] = b[2 + k].get<int>();
        g.bonds.push_back(bond);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("molecule: ") + e.what());
  }
  g.validate(cards);
  return g;
}

inline ojson molecule_to_json(const MoleculeGraph& g) {
  ojson j;
  j["atoms"] = ojson::array();
  for (const auto& a : g.atoms) j["atoms"].push_back(a);
  j["bonds"] = ojson::array();
  for (const auto& b : g.bonds) {
    ojson row = ojson::array({b.i, b.j});
    for (int f : b.features) row.push_back(f);
    j["bonds"].push_back(std::move(row));
  }
  return j;
}

struct MoleculeSet {
  FeatureCardinalities cards;
  std::vector<std::pair<std::string, MoleculeGraph>> entries;  // file order

  const MoleculeGraph* find(const std::string& code) const {
    for (const auto& [c, g] : entries)
      if (c == code) return &g;
    return nullptr;
  }

  // One graph per medication, in vocabulary order.
  std::vector<MoleculeGraph> for_vocabulary(const Vocabulary& meds) const {
    std::vector<MoleculeGraph> out;
    out.reserve(meds.size());
    for (std::size_t i = 0; i < meds.size(); ++i) {
      const MoleculeGraph* g = find(meds.code(i));
      if (!g) throw ValidationError("no molecule for medication \"" + meds.code(i) + "\"");
      out.push_back(*g);
    }
    return out;
  }
};

inline MoleculeSet parse_molecule_set(const ojson& j) {
  MoleculeSet set;
  try {
    const auto& fc = j.at("feature_cardinalities");
    const auto& atom = fc.at("atom");
    const auto& bond = fc.at("bond");
    if (atom.size() != kAtomFeatures || bond.size() != kBondFeatures) {
      throw ValidationError("molecule file: need 9 atom and 3 bond cardinalities");
    }
    for (std::size_t k = 0; k < kAtomFeatures; ++k) set.cards.atom[k] = atom[k].get<int>();
    for (std::size_t k = 0; k < kBondFeatures; ++k) set.cards.bond[k] = bond[k].get<int>();
    for (int c : set.cards.atom)
      if (c < 1) throw ValidationError("molecule file: cardinality must be >= 1");
    for (int c : set.cards.bond)
      if (c < 1) throw ValidationError("molecule file: cardinality must be >= 1");
    for (const auto& [code, mol] : j.at("molecules").items()) {
      try {
        set.entries.emplace_back(code, parse_molecule(mol, set.cards));
      } catch (const ValidationError& e) {
        throw ValidationError("molecule \"" + code + "\": " + e.what());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("molecule file: ") + e.what());
  }
  return set;
}

inline ojson molecule_set_to_json(const MoleculeSet& set) {
  ojson j;
  j["feature_cardinalities"]["atom"] = set.cards.atom;
  j["feature_cardinalities"]["bond"] = set.cards.bond;
  j["molecules"] = ojson::object();
  for (const auto& [code, g] : set.entries) j["molecules"][code] = molecule_to_json(g);
  return j;
}

inline MoleculeSet load_molecule_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open \"" + path + "\" for reading");
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": malformed JSON: " + e.what());
  }
  return parse_molecule_set(j);
}

inline void write_molecule_file(const std::string& path, const MoleculeSet& set) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open \"" + path + "\" for writing");
  out << molecule_set_to_json(set).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// GIN encoder

struct GinLayerParams {
  Tensor eps;  // learnable scalar, starts at 0
  Mlp2 mlp;    // d_s -> d_s -> d_s
};

struct GinParams {
  std::size_t dim = 0;
  std::vector<Tensor> atom_tables;  // one (cardinality x dim) table per atom feature slot
  std::vector<Tensor> bond_tables;  // one per bond feature slot, shared by all layers
  std::vector<GinLayerParams> layers;

  static GinParams init(const FeatureCardinalities& cards, std::size_t dim, std::size_t n_layers, Rng& rng) {
    GinParams p;
    p.dim = dim;
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int c : cards.atom) p.atom_tables.push_back(normal_init(static_cast<std::size_t>(c), dim, emb_std, rng));
    for (int c : cards.bond) p.bond_tables.push_back(normal_init(static_cast<std::size_t>(c), dim, emb_std, rng));
    for (std::size_t l = 0; l < n_layers; ++l) {
      p.layers.push_back({Tensor::scalar(0.0, true), Mlp2::init(dim, dim, dim, rng)});
    }
    return p;
  }

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
    for (std::size_t k = 0; k < atom_tables.size(); ++k)
      out.push_back({prefix + ".atom_embed." + std::to_string(k), atom_tables[k]});
    for (std::size_t k = 0; k < bond_tables.size(); ++k)
      out.push_back({prefix + ".bond_embed." + std::to_string(k), bond_tables[k]});
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string lp = prefix + ".layer" + std::to_string(l);
      out.push_back({lp + ".eps", layers[l].eps});
      layers[l].mlp.collect(lp + ".mlp", out);
    }
  }
};

// Directed-edge view of a molecule: each bond appears as (i <- j) and (j <- i).
struct EdgeIndex {
  std::vector<std::size_t> target;
  std::vector<std::size_t> source;
  std::vector<std::size_t> bond;  // originating bond per directed edge

  static EdgeIndex of(const MoleculeGraph& g) {
    EdgeIndex e;
    for (std::size_t b = 0; b < g.bonds.size(); ++b) {
      const auto& bd = g.bonds[b];
      e.target.push_back(bd.i);
      e.source.push_back(bd.j);
      e.bond.push_back(b);
      e.target.push_back(bd.j);
      e.source.push_back(bd.i);
      e.bond.push_back(b);
    }
    return e;
  }
};

// Initial atom features: sum of the per-slot embedding rows, (n x d_s).
inline Tensor embed_atoms(const MoleculeGraph& g, const GinParams& params) {
  Tensor acc;
  for (std::size_t f = 0; f < kAtomFeatures; ++f) {
    std::vector<std::size_t> idx;
    idx.reserve(g.atoms.size());
    for (const auto& a : g.atoms) idx.push_back(static_cast<std::size_t>(a[f]));
    Tensor rows = gather_rows(params.atom_tables[f], std::move(idx));
    acc = acc.defined() ? add(acc, rows) : rows;
  }
  return acc;
}

// Bond features per directed edge, (2|B| x d_s). Undefined when there are no bonds.
inline Tensor embed_edges(const MoleculeGraph& g, const EdgeIndex& edges, const GinParams& params) {
  if (edges.bond.empty()) return {};
  Tensor acc;
  for (std::size_t f = 0; f < kBondFeatures; ++f) {
    std::vector<std::size_t> idx;
    idx.reserve(edges.bond.size());
    for (auto b : edges.bond) idx.push_back(static_cast<std::size_t>(g.bonds[b].features[f]));
    Tensor rows = gather_rows(params.bond_tables[f], std::move(idx));
    acc = acc.defined() ? add(acc, rows) : rows;
  }
  return acc;
}

// One message-passing step:
//   agg_i = sum_{j in N(i)} (h_j + edge(i, j))
//   out_i = MLP((1 + eps) h_i + agg_i)
inline Tensor gin_layer(const Tensor& feats, const MoleculeGraph& g, const EdgeIndex& edges,
                        const Tensor& edge_feats, const GinLayerParams& layer, const ForwardContext& ctx) {
  if (feats.rank() != 2 || feats.rows() != g.num_atoms()) {
    throw ShapeError("gin_layer: features " + shape_str(feats.shape()) + " for " +
                     std::to_string(g.num_atoms()) + " atoms");
  }
  Tensor combined = add(feats, mul_scalar(feats, layer.eps));
  if (!edges.source.empty()) {
    Tensor messages = add(gather_rows(feats, edges.source), edge_feats);
    combined = add(combined, scatter_add_rows(messages, edges.target, g.num_atoms()));
  }
  return layer.mlp(combined, ctx);
}

// Mean over atoms, (n x d_s) -> (1 x d_s).
inline Tensor gin_readout(const Tensor& feats) {
  if (feats.rank() != 2 || feats.rows() == 0) {
    throw ContractError("gin_readout: need at least one atom, got " + shape_str(feats.shape()));
  }
  return mean_rows(feats);
}

inline Tensor encode_molecule(const MoleculeGraph& g, const GinParams& params, const ForwardContext& ctx) {
  const EdgeIndex edges = EdgeIndex::of(g);
  const Tensor edge_feats = embed_edges(g, edges, params);
  Tensor h = embed_atoms(g, params);
  for (const auto& layer : params.layers) h = gin_layer(h, g, edges, edge_feats, layer, ctx);
  return gin_readout(h);
}

// Structure matrix E_s, one row per molecule, shared encoder parameters.
inline Tensor encode_all_medications(const std::vector<MoleculeGraph>& graphs, const GinParams& params,
                                     const ForwardContext& ctx) {
  if (graphs.empty()) throw ContractError("encode_all_medications: no molecules");
  std::vector<Tensor> rows;
  rows.reserve(graphs.size());
  for (const auto& g : graphs) rows.push_back(encode_molecule(g, params, ctx));
  return stack_rows(rows);
}

}  // namespace nlammr
