#include "nofas/models.hpp"

namespace nofas::models::detail {

// Bundled one-cycle aortic-like inflow (period 1.07 s, mean 40.9965 ml/s).
// Kept in sync with data/inflow_waveform.csv.
const std::vector<std::pair<double, double>>& default_waveform_table() {
    static const std::vector<std::pair<double, double>> table = {
    {0.00, 0},
    {0.01, 23.95997824},
    {0.02, 47.65744595},
    {0.03, 70.83276871},
    {0.04, 93.23203283},
    {0.05, 114.6098273},
    {0.06, 134.7319325},
    {0.07, 153.3778865},
    {0.08, 170.3434002},
    {0.09, 185.442596},
    {0.10, 198.5100439},
    {0.11, 209.4025742},
    {0.12, 218.0008462},
    {0.13, 224.2106552},
    {0.14, 227.9639653},
    {0.15, 229.2196546},
    {0.16, 227.9639653},
    {0.17, 224.2106552},
    {0.18, 218.0008462},
    {0.19, 209.4025742},
    {0.20, 198.5100439},
    {0.21, 185.442596},
    {0.22, 170.3434002},
    {0.23, 153.3778865},
    {0.24, 134.7319325},
    {0.25, 114.6098273},
    {0.26, 93.23203283},
    {0.27, 70.83276871},
    {0.28, 47.65744595},
    {0.29, 23.95997824},
    {0.30, 2.807131163e-14},
    {0.31, -6.876589637},
    {0.32, -11.91060263},
    {0.33, -13.75317927},
    {0.34, -11.91060263},
    {0.35, -6.876589637},
    {0.36, -1.684278698e-15},
    {0.37, 0.9168786183},
    {0.38, 0.9168786183},
    {0.39, 0.9168786183},
    {0.40, 0.9168786183},
    {0.41, 0.9168786183},
    {0.42, 0.9168786183},
    {0.43, 0.9168786183},
    {0.44, 0.9168786183},
    {0.45, 0.9168786183},
    {0.46, 0.9168786183},
    {0.47, 0.9168786183},
    {0.48, 0.9168786183},
    {0.49, 0.9168786183},
    {0.50, 0.9168786183},
    {0.51, 0.9168786183},
    {0.52, 0.9168786183},
    {0.53, 0.9168786183},
    {0.54, 0.9168786183},
    {0.55, 0.9168786183},
    {0.56, 0.9168786183},
    {0.57, 0.9168786183},
    {0.58, 0.9168786183},
    {0.59, 0.9168786183},
    {0.60, 0.9168786183},
    {0.61, 0.9168786183},
    {0.62, 0.9168786183},
    {0.63, 0.9168786183},
    {0.64, 0.9168786183},
    {0.65, 0.9168786183},
    {0.66, 0.9168786183},
    {0.67, 0.9168786183},
    {0.68, 0.9168786183},
    {0.69, 0.9168786183},
    {0.70, 0.9168786183},
    {0.71, 0.9168786183},
    {0.72, 0.9168786183},
    {0.73, 0.9168786183},
    {0.74, 0.9168786183},
    {0.75, 0.9168786183},
    {0.76, 0.9168786183},
    {0.77, 0.9168786183},
    {0.78, 0.9168786183},
    {0.79, 0.9168786183},
    {0.80, 0.9168786183},
    {0.81, 0.9168786183},
    {0.82, 0.9168786183},
    {0.83, 0.9168786183},
    {0.84, 0.9168786183},
    {0.85, 0.9168786183},
    {0.86, 0.9168786183},
    {0.87, 0.9168786183},
    {0.88, 0.9168786183},
    {0.89, 0.9168786183},
    {0.90, 0.9168786183},
    {0.91, 0.9168786183},
    {0.92, 0.9168786183},
    {0.93, 0.9168786183},
    {0.94, 0.9168786183},
    {0.95, 0.9168786183},
    {0.96, 0.9168786183},
    {0.97, 0.9168786183},
    {0.98, 0.9168786183},
    {0.99, 0.9168786183},
    {1.00, 0.9168786183},
    {1.01, 0.9168786183},
    {1.02, 0.9168786183},
    {1.03, 0.9168786183},
    {1.04, 0.9168786183},
    {1.05, 0.9168786183},
    {1.06, 0.9168786183},
    {1.07, 0}
    };
    return table;
}

}  // namespace nofas::models::detail
