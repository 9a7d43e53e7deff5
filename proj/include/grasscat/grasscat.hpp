#pragma once

#include "grasscat/biplot.hpp"
#include "grasscat/errors.hpp"
#include "grasscat/factor.hpp"
#include "grasscat/grassmann.hpp"
#include "grasscat/io.hpp"
#include "grasscat/lbfgs.hpp"
#include "grasscat/linalg.hpp"
#include "grasscat/mixed.hpp"
#include "grasscat/mle.hpp"
#include "grasscat/oracle.hpp"
#include "grasscat/query.hpp"
#include "grasscat/sampling.hpp"
#include "grasscat/schema.hpp"
#include "grasscat/structured.hpp"
#include "grasscat/text.hpp"
