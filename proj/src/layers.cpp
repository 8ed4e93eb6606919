#include "moce/layers.hpp"

namespace moce::layers {

Activation parse_activation(const std::string& name) {
  if (name == "none") return Activation::none;
  if (name == "relu") return Activation::relu;
  if (name == "elu") return Activation::elu;
  throw InputError("unknown activation '" + name + "' (expected none, relu or elu)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::none:
      return "none";
    case Activation::relu:
      return "relu";
    case Activation::elu:
      return "elu";
  }
  return "none";
}

}  // namespace moce::layers
