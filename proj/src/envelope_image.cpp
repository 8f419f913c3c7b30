#include "ccgan/envelope_image.hpp"

#include "ccgan/errors.hpp"

namespace ccgan {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::phased:
      return "phased";
    case Domain::linear:
      return "linear";
    case Domain::generated:
      return "generated";
  }
  return "unknown";
}

Domain domain_from_string(std::string_view s) {
  if (s == "phased") return Domain::phased;
  if (s == "linear") return Domain::linear;
  if (s == "generated") return Domain::generated;
  throw DataError("unknown domain tag '" + std::string(s) + "'");
}

}  // namespace ccgan
