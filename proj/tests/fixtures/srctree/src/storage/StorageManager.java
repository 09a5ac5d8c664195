package fixture.storage;

import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class StorageManager {
    private static final Logger LOG = LoggerFactory.getLogger(StorageManager.class);

    void start(String rootPath, int count) {
        LOG.info("Storage manager starting");
        LOG.debug("scanning " + rootPath);
        if (count > 0) {
            LOG.info("Loaded {} storage directories", count);
        }
        LOG.warn("Cache nearly full");
    }

    void fail(String rootPath, Exception e) {
        LOG.error("Cannot access storage directory " + rootPath);
        LOG.error("Unexpected failure while syncing "
                + rootPath
                + " to remote store", e);
        logger.info("fallback path enabled");
    }
}
