#include "chf/sat_table_data.hpp"

namespace chf {

// Saturation line sampled from IAPWS-IF97 at 100 log-spaced pressure
// knots. Regenerate with scripts/gen_sat_table.py.
std::string_view sat_table_csv() {
    static constexpr char data[] = R"csv(
pressure_mpa,t_sat_c,h_f_kj_kg,h_g_kj_kg,h_fg_kj_kg
0.1,99.60591861,417.4364858,2674.949641,2257.513155
0.1054976358,101.1089106,423.7788772,2677.3188,2253.539923
0.1112975116,102.6258608,430.183284,2679.697223,2249.513939
0.1174162434,104.1569693,436.6507207,2682.084585,2245.433865
0.1238713609,105.7024402,443.1822246,2684.480537,2241.298312
0.1306813572,107.262481,449.7788567,2686.884704,2237.105848
0.1378657423,108.837303,456.4417022,2689.29669,2232.854988
0.1454450987,110.4271213,463.1718714,2691.716068,2228.544197
0.1534411405,112.0321547,469.9705006,2694.142388,2224.171887
0.1618767756,113.6526263,476.8387527,2696.575167,2219.736415
0.1707761711,115.288763,483.7778182,2699.013897,2215.236079
0.1801648231,116.9407959,490.788916,2701.458037,2210.669121
0.1900696289,118.6089601,497.8732945,2703.907012,2206.033718
0.2005189649,120.2934952,505.0322326,2706.360218,2201.327986
0.2115427673,121.9946451,512.2670404,2708.817015,2196.549974
0.2231726182,123.7126581,519.5790608,2711.276724,2191.697664
0.2354418359,125.4477869,526.9696702,2713.738635,2186.768964
0.2483855706,127.2002889,534.4402799,2716.201993,2181.761713
0.2620409047,128.9704264,541.9923374,2718.666009,2176.673671
0.2764469593,130.7584661,549.6273276,2721.129847,2171.502519
0.2916450063,132.5646799,557.3467742,2723.592631,2166.245856
0.3076785866,134.3893444,565.1522412,2726.053438,2160.901197
0.3245936347,136.2327415,573.0453344,2728.511299,2155.465965
0.3424386106,138.0951581,581.027703,2730.965196,2149.937493
0.3612646382,139.9768864,589.1010414,2733.414057,2144.313015
0.3811256523,141.8782239,597.267091,2735.856758,2138.589667
0.4020785527,143.7994737,605.5276416,2738.292118,2132.764476
0.4241833671,145.7409441,613.8845343,2740.718895,2126.83436
0.4475034238,147.7029495,622.3396627,2743.135784,2120.796121
0.4721055323,149.6858097,630.8949757,2745.541415,2114.646439
0.498060175,151.6898505,639.5524795,2747.934344,2108.381865
0.5254417095,153.7154037,648.3142404,2750.313056,2101.998816
0.5543285811,155.762807,657.1823871,2752.675953,2095.493566
0.5848035476,157.8324043,666.1591138,2755.021355,2088.862241
0.6169539169,159.924546,675.2466829,2757.34749,2082.100807
0.6508717963,162.0395884,684.4474281,2759.652489,2075.205061
0.6866543572,164.1778948,693.7637582,2761.934385,2068.170627
0.724404113,166.3398348,703.1981598,2764.191096,2060.992937
0.7642292129,168.5257846,712.7532019,2766.420428,2053.667226
0.8062437517,170.7361274,722.4315392,2768.620059,2046.18852
0.8505680969,172.9712532,732.235917,2770.787536,2038.551619
0.8973292331,175.2315589,742.1691752,2772.920263,2030.751088
0.9466611263,177.5174487,752.2342532,2775.015493,2022.781239
0.9987051073,179.8293336,762.4341955,2777.070315,2014.636119
1.053610277,182.1676323,772.7721566,2779.081648,2006.309491
1.111533933,184.5327706,783.2514074,2781.046226,1997.794818
1.17264202,186.9251817,793.8753414,2782.960586,1989.085245
1.237109608,189.3453065,804.6474812,2784.821056,1980.173575
1.305121388,191.7935932,815.571486,2786.623742,1971.052256
1.376872209,194.270498,826.6511597,2788.36451,1961.71335
1.452567629,196.7764845,837.8904587,2790.038974,1952.148515
1.532424507,199.3120241,849.2935016,2791.642476,1942.348974
1.616671625,201.8775959,860.8645783,2793.17007,1932.305492
1.705550343,204.473687,872.6081614,2794.616502,1922.008341
1.79931529,207.1007919,884.5289169,2795.976188,1911.447271
1.898235091,209.7594132,896.6317171,2797.243192,1900.611474
2.002593143,212.4500609,908.921654,2798.411198,1889.489544
2.112688421,215.1732527,921.4040539,2799.473489,1878.069435
2.228836336,217.9295141,934.0844934,2800.422912,1866.338419
2.35136964,220.7193777,946.9688173,2801.251848,1854.283031
2.48063938,223.5433833,960.0631573,2801.952176,1841.889019
2.617015898,226.402078,973.373954,2802.515235,1829.141281
2.760889901,229.2960154,986.9079792,2802.931781,1816.023802
2.912673573,232.2257557,1000.672363,2803.19194,1802.519577
3.072801758,235.1918652,1014.674621,2803.285154,1788.610532
3.241733208,238.1949157,1028.922688,2803.200124,1774.277436
3.419951893,241.2354842,1043.424954,2802.924747,1759.499793
3.607968393,244.314152,1058.190302,2802.446035,1744.255733
3.806321355,247.4315045,1073.228155,2801.750035,1728.52188
4.015579041,250.5881295,1088.548529,2800.82173,1712.2732
4.236340952,253.7846169,1104.162092,2799.644926,1695.482834
4.469239549,257.0215573,1120.080227,2798.202123,1678.121896
4.714942063,260.2995405,1136.315115,2796.474357,1660.159243
4.974152406,263.6191541,1152.879821,2794.441027,1641.561206
5.247613189,266.9809813,1169.788402,2792.07968,1622.291278
5.536107851,270.3855993,1187.056025,2789.365766,1602.309741
5.840462898,273.8335761,1204.699113,2786.272351,1581.573239
6.161550278,277.3254681,1222.73551,2782.769779,1560.034269
6.500289872,280.8618165,1241.184687,2778.82528,1537.640593
6.857652135,284.4431433,1260.067971,2774.402512,1514.33454
7.234660874,288.0699463,1279.408832,2769.461029,1490.052197
7.632396181,291.7426944,1299.233215,2763.955649,1464.722434
8.051997526,295.4618204,1319.569944,2757.835698,1438.265754
8.494667025,299.2277138,1340.451205,2751.044079,1410.592873
8.961672881,303.0407122,1361.913139,2743.516079,1381.60294
9.454353018,306.9010901,1383.996576,2735.17781,1351.181234
9.974118914,310.8090471,1406.747985,2725.944068,1319.196084
10.52245965,314.7646926,1430.220747,2715.715374,1285.494627
11.10094616,318.7680286,1454.476957,2704.373813,1249.896856
11.71123575,322.8189278,1479.590092,2691.77724,1212.187148
12.35507684,326.9171087,1505.649111,2677.751281,1172.10217
13.03431396,331.0621037,1532.764835,2662.078549,1129.313714
13.75089307,335.2532212,1561.079848,2644.484465,1083.404617
14.5068671,339.4894984,1590.783444,2624.619119,1033.835675
15.30440182,343.7696407,1622.133202,2602.034714,979.9015114
16.14578209,348.091944,1655.483925,2576.158068,920.6741424
17.03341839,352.4541871,1691.407311,2546.225929,854.8186181
17.96985369,356.8534684,1730.723566,2510.751036,780.0274701
18.9577708,361.2859096,1774.912582,2467.43607,692.5234888
20,365.7459115,1827.100624,2411.387211,584.2865872
)csv";
    return {data + 1, sizeof(data) - 2};
}

}  // namespace chf
