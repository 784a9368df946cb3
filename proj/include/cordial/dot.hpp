#pragma once

// Graphviz rendering of a blocklace: one node per block labelled
// "creator@depth", one edge per pointer.  Leader blocks are filled, blocks
// that take part in an equivocation get a double border.

#include <sstream>
#include <string>

#include "cordial/ordering.hpp"

namespace cordial {

/// Blocks of depth <= up_to.  Throws if up_to exceeds the deepest block.
inline std::string to_dot(const BlockStore& store, const LeaderFn& leader, Round up_to) {
    if (up_to > store.max_depth())
        throw Error("round " + std::to_string(up_to) + " is beyond the deepest block (" +
                    std::to_string(store.max_depth()) + ")");
    std::ostringstream out;
    out << "digraph blocklace {\n  rankdir=BT;\n  node [shape=circle];\n";
    auto name = [&](Index i) { return "b" + std::to_string(i); };
    for (Round d = 1; d <= up_to; ++d) {
        out << "  { rank=same;";
        for (Index i : store.at_depth(d)) out << ' ' << name(i) << ';';
        out << " }\n";
        for (Index i : store.at_depth(d)) {
            const Block& b = store.block_at(i);
            out << "  " << name(i) << " [label=\"" << b.creator.value << '@' << d << "\", tooltip=\""
                << store.id_at(i).hex().substr(0, 16) << '"';
            auto who = leader(d);
            if (who && *who == b.creator) out << ", style=filled, fillcolor=gold";
            bool forked = false;
            for (Index j : store.by_creator(b.creator))
                if (j != i && store.is_equivocation_idx(i, j)) forked = true;
            if (forked) out << ", peripheries=2, color=red";
            out << "];\n";
        }
    }
    for (Round d = 1; d <= up_to; ++d)
        for (Index i : store.at_depth(d))
            for (const BlockId& p : store.block_at(i).pointers) out << "  " << name(i) << " -> " << name(store.index_of(p)) << ";\n";
    out << "}\n";
    return out.str();
}

}  // namespace cordial
