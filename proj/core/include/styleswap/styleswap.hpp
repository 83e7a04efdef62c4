#pragma once

#include "styleswap/adam.hpp"
#include "styleswap/csv.hpp"
#include "styleswap/encoder.hpp"
#include "styleswap/error.hpp"
#include "styleswap/inverse_net.hpp"
#include "styleswap/io.hpp"
#include "styleswap/layers.hpp"
#include "styleswap/style_swap.hpp"
#include "styleswap/stylize.hpp"
#include "styleswap/synthetic.hpp"
#include "styleswap/tensor.hpp"
