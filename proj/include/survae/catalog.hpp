#pragma once

#include <sstream>
#include <string>

#include "survae/registry.hpp"

// Renders the layer catalog as markdown, one section per registered layer
// kind. The four documentation fields are mandatory; an empty field aborts
// rendering (and therefore the build target that invokes it) with the name
// of the offending layer, so the catalog can never silently go stale.
namespace survae::catalog {

inline std::string render() {
  const auto& reg = registry::Registry::instance();
  std::ostringstream out;
  out << "# Layer catalog\n\n";
  out << "Every transform kind accepted by architecture descriptors, with its\n";
  out << "classification, forward map, the term it adds to the per-sample\n";
  out << "likelihood objective, and how the implementation is verified.\n";
  out << "Generated from the layer registry; do not edit by hand.\n";
  for (const auto& [name, entry] : reg.entries()) {
    const auto& doc = entry.doc;
    const struct {
      const char* label;
      const std::string& text;
    } fields[] = {
        {"classification", doc.classification},
        {"forward", doc.forward},
        {"contribution", doc.contribution},
        {"verification", doc.verification},
    };
    for (const auto& f : fields)
      if (f.text.empty())
        fail("catalog: layer '", name, "' is missing its ", f.label, " documentation");
    out << "\n## `" << name << "`\n\n";
    out << "- **Classification:** " << doc.classification << "\n";
    out << "- **Forward map:** " << doc.forward << "\n";
    out << "- **Objective contribution:** " << doc.contribution << "\n";
    out << "- **Verification:** " << doc.verification << "\n";
  }
  return out.str();
}

}  // namespace survae::catalog
