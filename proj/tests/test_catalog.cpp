#include <catch2/catch_amalgamated.hpp>

#include "survae/catalog.hpp"
#include "survae/registry.hpp"

using namespace survae;

TEST_CASE("the layer catalog documents every registered kind", "[catalog]") {
  const std::string md = catalog::render();
  REQUIRE(md.rfind("# Layer catalog", 0) == 0);

  std::size_t sections = 0;
  for (std::size_t pos = 0; (pos = md.find("## `", pos)) != std::string::npos; pos += 4)
    sections++;
  const auto& entries = registry::Registry::instance().entries();
  REQUIRE(sections == entries.size());
  REQUIRE(sections >= 14);

  for (const auto& [name, entry] : entries) {
    INFO(name);
    REQUIRE(md.find("## `" + name + "`") != std::string::npos);
  }

  // Each section carries all four required facets.
  for (const char* facet : {"**Classification:**", "**Forward map:**",
                            "**Objective contribution:**", "**Verification:**"}) {
    std::size_t count = 0;
    for (std::size_t pos = 0; (pos = md.find(facet, pos)) != std::string::npos; pos += 4)
      count++;
    INFO(facet);
    REQUIRE(count == entries.size());
  }
}
