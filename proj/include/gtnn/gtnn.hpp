#pragma once

#include "gtnn/bench.hpp"
#include "gtnn/container.hpp"
#include "gtnn/datagen.hpp"
#include "gtnn/error.hpp"
#include "gtnn/index_max.hpp"
#include "gtnn/index_sum.hpp"
#include "gtnn/random.hpp"
#include "gtnn/search.hpp"
#include "gtnn/theory.hpp"
#include "gtnn/vecstore.hpp"
