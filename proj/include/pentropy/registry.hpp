// Built-in system registry. Names accepted:
//   doubling                 z -> z^2 on a box chart of C
//   power:d                  z -> z^d
//   henon:c,b                (z, w) -> (w + z^2 + c, b z) on C^2
//   cat                      [[2,1],[1,1]] on the torus [0,1)^2, real mode
//   product:<sys>x<sys>      cartesian product of two registered systems
//   poly:c0,c1,...;(c0,...)  coordinate-wise polynomial map, one coefficient
//                            list (low-to-high degree) per coordinate,
//                            lists separated by ';'
#ifndef PENTROPY_REGISTRY_HPP
#define PENTROPY_REGISTRY_HPP

#include <string>
#include <vector>

#include "pentropy/roots.hpp"
#include "pentropy/system.hpp"

namespace pentropy {

MapSystem make_doubling();
MapSystem make_power(int d);
MapSystem make_henon(Complex c, Complex b);
MapSystem make_cat();
MapSystem make_product(const MapSystem& a, const MapSystem& b);

// Coordinate-wise polynomial map: coordinate j of the image is p_j(z_j).
MapSystem make_coordinate_polynomial(const std::vector<Polynomial>& per_coordinate, Mode mode);

// Parses a registry name (see header comment). Errors with ValidationError
// listing the registry grammar when the name is unknown.
MapSystem make_system(const std::string& spec);

std::vector<std::string> registry_names();

} // namespace pentropy

#endif
