#include "mslabel/tensor.hpp"

namespace mslabel {

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mslabel
