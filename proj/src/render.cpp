#include "dpgkit/render.hpp"

#include <algorithm>
#include <sstream>

namespace dpgkit {

namespace {

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string render_dot(const Dpg& dpg) {
  if (dpg.empty()) return "digraph dpg {}\n";
  std::vector<const Constituent*> nodes;
  for (const auto& n : dpg.nodes()) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::ostringstream os;
  os << "digraph dpg {\n";
  for (const auto* n : nodes)
    os << "  " << quoted(n->id) << " [label=" << quoted(std::string(to_string(n->category)) + ":" + n->id)
       << "];\n";
  for (const auto& e : dpg.edges()) {
    const std::string label = std::string(to_string(e.category));
    if (is_canvas_relation(e.category)) {
      os << "  " << quoted(e.members[0]) << " -> " << quoted(e.members[0]) << " [label=" << quoted(label)
         << ", style=dashed];\n";
      continue;
    }
    for (std::size_t k = 0; k + 1 < e.members.size(); ++k)
      os << "  " << quoted(e.members[k]) << " -> " << quoted(e.members[k + 1]) << " [label=" << quoted(label)
         << "];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace dpgkit
