#pragma once

#include <string>

#include "dpgkit/dpg.hpp"

namespace dpgkit {

/// Graphviz DOT text for a DPG. Nodes appear in id order and are labeled
/// "<category>:<id>"; each relationship becomes a chain of directed edges
/// through its members labeled "Rk". Canvas relations (R7..R10) are dashed
/// self-loops so the node set matches the graph exactly.
std::string render_dot(const Dpg& dpg);

}  // namespace dpgkit
