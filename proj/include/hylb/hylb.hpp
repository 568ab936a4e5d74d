#pragma once

#include "hylb/arc_io.hpp"
#include "hylb/case_studies.hpp"
#include "hylb/certificates.hpp"
#include "hylb/controller.hpp"
#include "hylb/errors.hpp"
#include "hylb/expression.hpp"
#include "hylb/geometry.hpp"
#include "hylb/hybrid.hpp"
#include "hylb/monitor.hpp"
#include "hylb/report.hpp"
#include "hylb/simulator.hpp"
