#include "adkg_sim.h"
#include <assert.h>
#include <stdio.h>
#include <string.h>

int main(void) {
    char *cfg = adkg_sim_reference_config();
    AdkgSimScenario *scenario = NULL;
    assert(adkg_sim_scenario_new(cfg, &scenario) == ADKG_SIM_STATUS_OK);
    char *json = NULL;
    assert(adkg_sim_scenario_run_json(scenario, 3, false, &json) == ADKG_SIM_STATUS_OK);
    assert(strstr(json, "\"violations\":[]") != NULL);
    assert(adkg_sim_scenario_new("n = 6\nf = 2\nprotocol = \"nwh\"", &scenario) == ADKG_SIM_STATUS_INVALID_CONFIG);
    assert(strlen(adkg_sim_last_error()) > 0);
    printf("c-smoke ok, version %s\n", adkg_sim_version());
    adkg_sim_string_free(json);
    adkg_sim_string_free(cfg);
    adkg_sim_scenario_free(scenario);
    return 0;
}
