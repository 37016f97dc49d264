#pragma once

#include "common.hpp"
#include "quadform.hpp"
#include "geno_model.hpp"
#include "genotype_matrix.hpp"
#include "sim_models.hpp"
#include "assoc_scan.hpp"
#include "epistasis.hpp"
#include "categorical.hpp"
#include "plink_io.hpp"
#include "cli.hpp"
