#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
  m.doc() = "free-space QKD pass simulator core";
  m.attr("__version__") = "1.0.0";
}
